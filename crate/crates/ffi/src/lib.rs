//! C ABI for the `optdesign` library.
//!
//! Objects are opaque handles created by `od_*` constructors and released
//! with the matching `od_*_free`. Every fallible function returns an
//! [`OdStatus`]; on failure `od_last_error_message` describes the error.
//! Matrices are passed row-major and treatment/condition indices are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use optdesign::contrasts::{self, ContrastSystem};
use optdesign::criteria::{self, Criterion, Exponent};
use optdesign::design::{Design, DesignSpace, NuisanceWeights, TreatmentWeights};
use optdesign::exact::{self, CandidateRule, EnumerationOptions};
use optdesign::nalgebra::DMatrix;
use optdesign::nuisance::{self, NuisanceModel};
use optdesign::resistance::{self, verify_against};
use optdesign::simplex::SimplexOptions;
use optdesign::weights::{self, OptimizerOptions};
use optdesign::{lp, Error, Tolerances};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdStatus {
    Ok = 0,
    NullPointer = 1,
    Invalid = 2,
    Numerical = 3,
    Panic = 4,
}

/// Conditions with their nuisance regressors and the number of treatments.
pub struct OdSpace(Arc<DesignSpace>);

pub struct OdContrast(ContrastSystem);

pub struct OdDesign(Design);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OdConstructInfo {
    pub support_size: usize,
    pub support_bound: usize,
    pub lp_rank: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct OdVerifyReport {
    pub optimal: bool,
    pub sufficient_only: bool,
    pub is_balanced: bool,
    pub is_resistant: bool,
    pub weight_gap: f64,
    pub resistance_residual: f64,
    pub efficiency: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult = Result<(), Failure>;

fn guard(f: impl FnOnce() -> FfiResult) -> OdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            OdStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            OdStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            if e.is_numerical() {
                OdStatus::Numerical
            } else {
                OdStatus::Invalid
            }
        }
        Err(_) => {
            set_error("internal panic");
            OdStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(
    p: *mut T,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &'static str) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn criterion(p: *const c_char) -> Result<Criterion, Failure> {
    if p.is_null() {
        return Err(Failure::Null("criterion"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Parse("criterion is not UTF-8".into()))?;
    Ok(s.parse()?)
}

fn boxed<T>(x: T) -> *mut T {
    Box::into_raw(Box::new(x))
}

unsafe fn space_out(
    v: usize,
    model: optdesign::Result<NuisanceModel>,
    out: *mut *mut OdSpace,
) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    let space = model?.space(v)?;
    out.write(boxed(OdSpace(Arc::new(space))));
    Ok(())
}

/// Message for the most recent failing call on this thread; empty after a
/// success. The pointer stays valid until the next `od_*` call on the thread.
#[no_mangle]
pub extern "C" fn od_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_space_poly(
    v: usize,
    n: usize,
    degree: usize,
    out: *mut *mut OdSpace,
) -> OdStatus {
    guard(|| space_out(v, nuisance::build_poly_trend(n, degree), out))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_space_trig(
    v: usize,
    n: usize,
    degree: usize,
    out: *mut *mut OdSpace,
) -> OdStatus {
    guard(|| space_out(v, nuisance::build_trig_trend(n, degree), out))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_space_exponential(
    v: usize,
    n: usize,
    out: *mut *mut OdSpace,
) -> OdStatus {
    guard(|| space_out(v, nuisance::build_exponential_trend(n), out))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_space_block(
    v: usize,
    blocks: usize,
    out: *mut *mut OdSpace,
) -> OdStatus {
    guard(|| space_out(v, nuisance::build_block(blocks), out))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_space_rowcol(
    v: usize,
    rows: usize,
    cols: usize,
    out: *mut *mut OdSpace,
) -> OdStatus {
    guard(|| space_out(v, nuisance::build_rowcolumn(rows, cols), out))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_space_blocktrend(
    v: usize,
    blocks: usize,
    blocksize: usize,
    degree: usize,
    out: *mut *mut OdSpace,
) -> OdStatus {
    guard(|| {
        space_out(
            v,
            nuisance::build_blocktrend(blocks, blocksize, degree),
            out,
        )
    })
}

/// Custom regressors: `h` is `n × d`, row `t` holding `h(t)`.
///
/// # Safety
/// `h` must point to `n * d` doubles and `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn od_space_custom(
    v: usize,
    n: usize,
    d: usize,
    h: *const f64,
    out: *mut *mut OdSpace,
) -> OdStatus {
    guard(|| {
        let values = slice(h, n * d, "h")?;
        let labels = (1..=n).map(|t| t.to_string()).collect();
        space_out(
            v,
            NuisanceModel::custom(labels, DMatrix::from_row_slice(n, d, values)),
            out,
        )
    })
}

/// # Safety
/// `space` must be null or a handle from an `od_space_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn od_space_free(space: *mut OdSpace) {
    if !space.is_null() {
        drop(Box::from_raw(space));
    }
}

unsafe fn contrast_out(
    q: optdesign::Result<ContrastSystem>,
    out: *mut *mut OdContrast,
) -> FfiResult {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    out.write(boxed(OdContrast(q?)));
    Ok(())
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_contrast_orthonormal(v: usize, out: *mut *mut OdContrast) -> OdStatus {
    guard(|| contrast_out(contrasts::orthonormal_contrasts(v), out))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_contrast_centered(v: usize, out: *mut *mut OdContrast) -> OdStatus {
    guard(|| contrast_out(contrasts::centered_contrasts(v), out))
}

/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_contrast_pairwise(v: usize, out: *mut *mut OdContrast) -> OdStatus {
    guard(|| contrast_out(contrasts::pairwise_contrasts(v), out))
}

/// Treatments `0..g` are the controls.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn od_contrast_controls(
    v: usize,
    g: usize,
    out: *mut *mut OdContrast,
) -> OdStatus {
    guard(|| contrast_out(contrasts::controls_contrasts(v, g), out))
}

/// `q` is `v × s`, one row per treatment.
///
/// # Safety
/// `q` must point to `v * s` doubles and `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn od_contrast_custom(
    v: usize,
    s: usize,
    q: *const f64,
    out: *mut *mut OdContrast,
) -> OdStatus {
    guard(|| {
        let values = slice(q, v * s, "q")?;
        contrast_out(
            ContrastSystem::custom(DMatrix::from_row_slice(v, s, values)),
            out,
        )
    })
}

/// # Safety
/// `q` must be null or a handle from an `od_contrast_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn od_contrast_free(q: *mut OdContrast) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Optimal total control weight for `g` controls; `p = -INFINITY` gives E.
///
/// # Safety
/// `out` must be valid for writing a double.
#[no_mangle]
pub unsafe extern "C" fn od_gamma_p(v: usize, g: usize, p: f64, out: *mut f64) -> OdStatus {
    guard(|| {
        let e = if p == f64::NEG_INFINITY {
            Exponent::NegInfinity
        } else {
            Exponent::new(p)?
        };
        write_out(out, weights::gamma_p(v, g, e)?.gamma, "out")
    })
}

/// Optimal treatment proportions for a criterion given as "D", "A", "E",
/// "MV" or "p=<x>". `out_w` receives `v` values; `out_value` may be null.
///
/// # Safety
/// Pointers must be valid; `out_w` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn od_optimal_weights(
    q: *const OdContrast,
    crit: *const c_char,
    out_w: *mut f64,
    len: usize,
    out_value: *mut f64,
) -> OdStatus {
    guard(|| {
        let q = &borrow(q, "contrast")?.0;
        let crit = criterion(crit)?;
        if len != q.v() {
            return Err(
                Error::InvalidWeights(format!("buffer of {len} for {} treatments", q.v())).into(),
            );
        }
        let w = slice_mut(out_w, len, "out_w")?;
        let opt =
            weights::optimize_weights(q, crit, &OptimizerOptions::default())?.into_result()?;
        w.copy_from_slice(opt.weights.as_slice());
        if !out_value.is_null() {
            out_value.write(opt.value);
        }
        Ok(())
    })
}

/// Product design `w ⊗ alpha`.
///
/// # Safety
/// `w` and `alpha` must hold `v` and `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_design_product(
    space: *const OdSpace,
    w: *const f64,
    alpha: *const f64,
    out: *mut *mut OdDesign,
) -> OdStatus {
    guard(|| {
        let space = &borrow(space, "space")?.0;
        let w = TreatmentWeights::with_tolerance(slice(w, space.v(), "w")?.to_vec(), 1e-9)?;
        let alpha = NuisanceWeights::new(slice(alpha, space.n(), "alpha")?.to_vec())?;
        let xi = resistance::product_design(space.clone(), &w, &alpha)?;
        write_out(out, boxed(OdDesign(xi)), "out")
    })
}

/// Design from a dense `v × n` weight matrix summing to one.
///
/// # Safety
/// `weights` must hold `v * n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_design_from_weights(
    space: *const OdSpace,
    weights: *const f64,
    out: *mut *mut OdDesign,
) -> OdStatus {
    guard(|| {
        let space = &borrow(space, "space")?.0;
        let m = DMatrix::from_row_slice(
            space.v(),
            space.n(),
            slice(weights, space.v() * space.n(), "weights")?,
        );
        let xi = Design::normalized(space.clone(), m_cells(&m), 1e-9)?;
        write_out(out, boxed(OdDesign(xi)), "out")
    })
}

fn m_cells(m: &DMatrix<f64>) -> Vec<(usize, usize, f64)> {
    (0..m.nrows())
        .flat_map(|u| (0..m.ncols()).map(move |t| (u, t)))
        .map(|(u, t)| (u, t, m[(u, t)]))
        .collect()
}

/// Exact design with treatment `order[t]` in condition `t`.
///
/// # Safety
/// `order` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn od_design_from_run_order(
    space: *const OdSpace,
    order: *const usize,
    n: usize,
    out: *mut *mut OdDesign,
) -> OdStatus {
    guard(|| {
        let space = &borrow(space, "space")?.0;
        let xi = Design::from_run_order(space.clone(), slice(order, n, "order")?)?;
        write_out(out, boxed(OdDesign(xi)), "out")
    })
}

/// # Safety
/// `design` must be null or a handle returned by this library.
#[no_mangle]
pub unsafe extern "C" fn od_design_free(design: *mut OdDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Number of cells with positive weight.
///
/// # Safety
/// `design` must be a valid handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_design_support_size(
    design: *const OdDesign,
    out: *mut usize,
) -> OdStatus {
    guard(|| write_out(out, borrow(design, "design")?.0.support_size(), "out"))
}

/// Dense `v × n` weights, row-major.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn od_design_weights(
    design: *const OdDesign,
    out: *mut f64,
    len: usize,
) -> OdStatus {
    guard(|| {
        let xi = &borrow(design, "design")?.0;
        let (v, n) = (xi.space().v(), xi.space().n());
        if len != v * n {
            return Err(
                Error::InvalidDesign(format!("buffer of {len} for {v}×{n} weights")).into(),
            );
        }
        let buf = slice_mut(out, len, "out")?;
        let m = xi.to_dense();
        for u in 0..v {
            for t in 0..n {
                buf[u * n + t] = m[(u, t)];
            }
        }
        Ok(())
    })
}

/// Small-support optimal design from a vertex of the balance LP.
///
/// # Safety
/// Handles must be valid; `out` writable; `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn od_construct(
    space: *const OdSpace,
    q: *const OdContrast,
    crit: *const c_char,
    seed: u64,
    out: *mut *mut OdDesign,
    info: *mut OdConstructInfo,
) -> OdStatus {
    guard(|| {
        let space = &borrow(space, "space")?.0;
        let q = &borrow(q, "contrast")?.0;
        let crit = criterion(crit)?;
        let opt =
            weights::optimize_weights(q, crit, &OptimizerOptions::default())?.into_result()?;
        let problem = lp::assemble_lp(space, &opt.weights, seed)?;
        let vertex = lp::solve_vertex(&problem, space.clone(), &SimplexOptions::default())?;
        if !info.is_null() {
            info.write(OdConstructInfo {
                support_size: vertex.support_size,
                support_bound: vertex.support_bound,
                lp_rank: vertex.lp_rank,
            });
        }
        write_out(out, boxed(OdDesign(vertex.design)), "out")
    })
}

/// Optimality check; `tol` bounds the weight gap and resistance residual.
///
/// # Safety
/// Handles must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_verify(
    design: *const OdDesign,
    q: *const OdContrast,
    crit: *const c_char,
    tol: f64,
    out: *mut OdVerifyReport,
) -> OdStatus {
    guard(|| {
        let xi = &borrow(design, "design")?.0;
        let q = &borrow(q, "contrast")?.0;
        let crit = criterion(crit)?;
        if tol.is_nan() || tol <= 0.0 {
            return Err(Error::Parse(format!("tolerance {tol} must be positive")).into());
        }
        let opt =
            weights::optimize_weights(q, crit, &OptimizerOptions::default())?.into_result()?;
        let r = verify_against(
            xi,
            q,
            crit,
            &opt.weights,
            opt.value,
            &Tolerances::table_input(tol),
        )?;
        write_out(
            out,
            OdVerifyReport {
                optimal: r.optimal,
                sufficient_only: r.sufficient_only,
                is_balanced: r.is_balanced,
                is_resistant: r.is_resistant,
                weight_gap: r.weight_gap,
                resistance_residual: r.resistance_residual,
                efficiency: r.efficiency,
            },
            "out",
        )
    })
}

/// Criterion value of a design (for MV, the largest variance).
///
/// # Safety
/// Handles must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_design_value(
    design: *const OdDesign,
    q: *const OdContrast,
    crit: *const c_char,
    out: *mut f64,
) -> OdStatus {
    guard(|| {
        let xi = &borrow(design, "design")?.0;
        let q = &borrow(q, "contrast")?.0;
        let v = criteria::design_value(xi, q, criterion(crit)?, &Tolerances::default())?;
        write_out(out, v, "out")
    })
}

/// Efficiency against the optimal treatment proportions.
///
/// # Safety
/// Handles must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn od_efficiency(
    design: *const OdDesign,
    q: *const OdContrast,
    crit: *const c_char,
    out: *mut f64,
) -> OdStatus {
    guard(|| {
        let xi = &borrow(design, "design")?.0;
        let q = &borrow(q, "contrast")?.0;
        let crit = criterion(crit)?;
        let opt =
            weights::optimize_weights(q, crit, &OptimizerOptions::default())?.into_result()?;
        write_out(
            out,
            criteria::efficiency(xi, q, crit, opt.value, &Tolerances::default())?,
            "out",
        )
    })
}

/// Exact run order by enumeration over the free conditions of `design`.
/// `all_candidates` widens each free condition to every treatment.
/// `out_order` receives `n` treatments; `out_efficiency` may be null.
///
/// # Safety
/// Handles must be valid; `out_order` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn od_enumerate_exact(
    design: *const OdDesign,
    q: *const OdContrast,
    crit: *const c_char,
    all_candidates: bool,
    out_order: *mut usize,
    n: usize,
    out_efficiency: *mut f64,
) -> OdStatus {
    guard(|| {
        let xi = &borrow(design, "design")?.0;
        let q = &borrow(q, "contrast")?.0;
        let crit = criterion(crit)?;
        if n != xi.space().n() {
            return Err(Error::InvalidDesign(format!(
                "buffer of {n} for {} conditions",
                xi.space().n()
            ))
            .into());
        }
        let order = slice_mut(out_order, n, "out_order")?;
        let opts = EnumerationOptions {
            rule: if all_candidates {
                CandidateRule::All
            } else {
                CandidateRule::Supported
            },
            ..Default::default()
        };
        let e = exact::enumerate_exact(xi, q, crit, &opts)?;
        order.copy_from_slice(&e.run_order);
        if !out_efficiency.is_null() {
            out_efficiency.write(e.efficiency);
        }
        Ok(())
    })
}
