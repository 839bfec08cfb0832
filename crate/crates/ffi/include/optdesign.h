#ifndef OPTDESIGN_H
#define OPTDESIGN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OdStatus {
  OD_STATUS_OK = 0,
  OD_STATUS_NULL_POINTER = 1,
  OD_STATUS_INVALID = 2,
  OD_STATUS_NUMERICAL = 3,
  OD_STATUS_PANIC = 4,
} OdStatus;

typedef struct OdContrast OdContrast;

typedef struct OdDesign OdDesign;

/**
 * Conditions with their nuisance regressors and the number of treatments.
 */
typedef struct OdSpace OdSpace;

typedef struct OdConstructInfo {
  size_t support_size;
  size_t support_bound;
  size_t lp_rank;
} OdConstructInfo;

typedef struct OdVerifyReport {
  bool optimal;
  bool sufficient_only;
  bool is_balanced;
  bool is_resistant;
  double weight_gap;
  double resistance_residual;
  double efficiency;
} OdVerifyReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failing call on this thread; empty after a
 * success. The pointer stays valid until the next `od_*` call on the thread.
 */
const char *od_last_error_message(void);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_space_poly(size_t v, size_t n, size_t degree, struct OdSpace **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_space_trig(size_t v, size_t n, size_t degree, struct OdSpace **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_space_exponential(size_t v, size_t n, struct OdSpace **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_space_block(size_t v, size_t blocks, struct OdSpace **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_space_rowcol(size_t v, size_t rows, size_t cols, struct OdSpace **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_space_blocktrend(size_t v,
                                  size_t blocks,
                                  size_t blocksize,
                                  size_t degree,
                                  struct OdSpace **out);

/**
 * Custom regressors: `h` is `n × d`, row `t` holding `h(t)`.
 *
 * # Safety
 * `h` must point to `n * d` doubles and `out` must be valid for writing.
 */
enum OdStatus od_space_custom(size_t v, size_t n, size_t d, const double *h, struct OdSpace **out);

/**
 * # Safety
 * `space` must be null or a handle from an `od_space_*` constructor.
 */
void od_space_free(struct OdSpace *space);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_contrast_orthonormal(size_t v, struct OdContrast **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_contrast_centered(size_t v, struct OdContrast **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_contrast_pairwise(size_t v, struct OdContrast **out);

/**
 * Treatments `0..g` are the controls.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum OdStatus od_contrast_controls(size_t v, size_t g, struct OdContrast **out);

/**
 * `q` is `v × s`, one row per treatment.
 *
 * # Safety
 * `q` must point to `v * s` doubles and `out` must be valid for writing.
 */
enum OdStatus od_contrast_custom(size_t v, size_t s, const double *q, struct OdContrast **out);

/**
 * # Safety
 * `q` must be null or a handle from an `od_contrast_*` constructor.
 */
void od_contrast_free(struct OdContrast *q);

/**
 * Optimal total control weight for `g` controls; `p = -INFINITY` gives E.
 *
 * # Safety
 * `out` must be valid for writing a double.
 */
enum OdStatus od_gamma_p(size_t v, size_t g, double p, double *out);

/**
 * Optimal treatment proportions for a criterion given as "D", "A", "E",
 * "MV" or "p=<x>". `out_w` receives `v` values; `out_value` may be null.
 *
 * # Safety
 * Pointers must be valid; `out_w` must hold `len` doubles.
 */
enum OdStatus od_optimal_weights(const struct OdContrast *q,
                                 const char *crit,
                                 double *out_w,
                                 size_t len,
                                 double *out_value);

/**
 * Product design `w ⊗ alpha`.
 *
 * # Safety
 * `w` and `alpha` must hold `v` and `n` doubles; `out` must be writable.
 */
enum OdStatus od_design_product(const struct OdSpace *space,
                                const double *w,
                                const double *alpha,
                                struct OdDesign **out);

/**
 * Design from a dense `v × n` weight matrix summing to one.
 *
 * # Safety
 * `weights` must hold `v * n` doubles; `out` must be writable.
 */
enum OdStatus od_design_from_weights(const struct OdSpace *space,
                                     const double *weights,
                                     struct OdDesign **out);

/**
 * Exact design with treatment `order[t]` in condition `t`.
 *
 * # Safety
 * `order` must hold `n` entries; `out` must be writable.
 */
enum OdStatus od_design_from_run_order(const struct OdSpace *space,
                                       const size_t *order,
                                       size_t n,
                                       struct OdDesign **out);

/**
 * # Safety
 * `design` must be null or a handle returned by this library.
 */
void od_design_free(struct OdDesign *design);

/**
 * Number of cells with positive weight.
 *
 * # Safety
 * `design` must be a valid handle and `out` writable.
 */
enum OdStatus od_design_support_size(const struct OdDesign *design, size_t *out);

/**
 * Dense `v × n` weights, row-major.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum OdStatus od_design_weights(const struct OdDesign *design, double *out, size_t len);

/**
 * Small-support optimal design from a vertex of the balance LP.
 *
 * # Safety
 * Handles must be valid; `out` writable; `info` may be null.
 */
enum OdStatus od_construct(const struct OdSpace *space,
                           const struct OdContrast *q,
                           const char *crit,
                           uint64_t seed,
                           struct OdDesign **out,
                           struct OdConstructInfo *info);

/**
 * Optimality check; `tol` bounds the weight gap and resistance residual.
 *
 * # Safety
 * Handles must be valid and `out` writable.
 */
enum OdStatus od_verify(const struct OdDesign *design,
                        const struct OdContrast *q,
                        const char *crit,
                        double tol,
                        struct OdVerifyReport *out);

/**
 * Criterion value of a design (for MV, the largest variance).
 *
 * # Safety
 * Handles must be valid and `out` writable.
 */
enum OdStatus od_design_value(const struct OdDesign *design,
                              const struct OdContrast *q,
                              const char *crit,
                              double *out);

/**
 * Efficiency against the optimal treatment proportions.
 *
 * # Safety
 * Handles must be valid and `out` writable.
 */
enum OdStatus od_efficiency(const struct OdDesign *design,
                            const struct OdContrast *q,
                            const char *crit,
                            double *out);

/**
 * Exact run order by enumeration over the free conditions of `design`.
 * `all_candidates` widens each free condition to every treatment.
 * `out_order` receives `n` treatments; `out_efficiency` may be null.
 *
 * # Safety
 * Handles must be valid; `out_order` must hold `n` entries.
 */
enum OdStatus od_enumerate_exact(const struct OdDesign *design,
                                 const struct OdContrast *q,
                                 const char *crit,
                                 bool all_candidates,
                                 size_t *out_order,
                                 size_t n,
                                 double *out_efficiency);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPTDESIGN_H */
