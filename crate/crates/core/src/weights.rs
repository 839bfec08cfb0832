//! Optimal treatment proportions of the nuisance-free model.
//!
//! Closed forms cover completely symmetric systems (uniform weights) and
//! comparisons with controls (two-group weights driven by `γ_p`). Other
//! contrast systems go through an entropic mirror-ascent solver on the
//! simplex, which is valid because `w ↦ log Φ_p(C_Q(w))` is concave.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::contrasts::{check_controls, complete_symmetry_factor, ContrastKind, ContrastSystem};
use crate::criteria::{Criterion, Exponent};
use crate::design::{weights_variance, TreatmentWeights};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, RANK_CUTOFF};

/// Total control weight `γ_p` for comparisons with controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaSolution {
    pub gamma: f64,
    pub p: Exponent,
}

/// `F(γ) = (v−g−1)γ^{1−p} − (g−1)(1−γ)^{1−p} + 2γ − 1`.
pub fn gamma_equation(v: usize, g: usize, p: f64, gamma: f64) -> f64 {
    let (vf, gf) = (v as f64, g as f64);
    (vf - gf - 1.0) * gamma.powf(1.0 - p) - (gf - 1.0) * (1.0 - gamma).powf(1.0 - p) + 2.0 * gamma
        - 1.0
}

fn gamma_equation_slope(v: usize, g: usize, p: f64, gamma: f64) -> f64 {
    let (vf, gf) = (v as f64, g as f64);
    (1.0 - p) * ((vf - gf - 1.0) * gamma.powf(-p) + (gf - 1.0) * (1.0 - gamma).powf(-p)) + 2.0
}

/// Solves `F(γ) = 0` on `(0, 1/2]`; `γ_{−∞} = 1/2`.
pub fn gamma_p(v: usize, g: usize, p: Exponent) -> Result<GammaSolution> {
    check_controls(v, g)?;
    let p_val = match p {
        Exponent::NegInfinity => return Ok(GammaSolution { gamma: 0.5, p }),
        Exponent::Finite(p) => p,
    };
    let (vf, gf) = (v as f64, g as f64);
    if p_val == 0.0 {
        return Ok(GammaSolution { gamma: gf / vf, p });
    }
    if p_val == -1.0 {
        let gamma = ((gf * (vf - gf)).sqrt() - gf) / (vf - 2.0 * gf);
        return Ok(GammaSolution { gamma, p });
    }
    // F is increasing with F(0) ≤ 0 ≤ F(1/2): Newton inside a shrinking bracket.
    let f = |x: f64| gamma_equation(v, g, p_val, x);
    let (mut lo, mut hi) = (1e-12_f64, 0.5_f64);
    if f(hi) <= 0.0 {
        return Ok(GammaSolution { gamma: hi, p });
    }
    let mut x = gf / vf;
    for _ in 0..200 {
        let fx = f(x);
        if fx.abs() <= 1e-14 {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / gamma_equation_slope(v, g, p_val, x);
        x = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(GammaSolution { gamma: x, p })
}

pub fn uniform_weights(v: usize) -> TreatmentWeights {
    TreatmentWeights::uniform(v)
}

fn two_group(v: usize, g: usize, gamma: f64) -> Result<TreatmentWeights> {
    let control = gamma / g as f64;
    let other = (1.0 - gamma) / (v - g) as f64;
    let w = (0..v)
        .map(|u| if u < g { control } else { other })
        .collect();
    TreatmentWeights::with_tolerance(w, 1e-12)
}

/// `w_u = γ_p/g` for the controls, `(1 − γ_p)/(v − g)` for the rest.
pub fn controls_weights(v: usize, g: usize, p: Exponent) -> Result<TreatmentWeights> {
    let sol = gamma_p(v, g, p)?;
    two_group(v, g, sol.gamma)
}

/// MV-optimal weights for comparisons with controls; identical to the A-optimal ones.
pub fn mv_weights(v: usize, g: usize) -> Result<TreatmentWeights> {
    controls_weights(v, g, Exponent::Finite(-1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerOptions {
    /// Stop when the projected gradient of `log Φ` is below this norm.
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            tol: 1e-10,
            max_iter: 10_000,
            restarts: 5,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizedWeights {
    pub weights: TreatmentWeights,
    /// `Φ_p(C_Q(w))` (or the MV value) at `weights`.
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Euclidean norm of the projected gradient of `log Φ` (0 for closed forms).
    pub stationarity: f64,
}

impl OptimizedWeights {
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
            })
        }
    }
}

/// Φ-optimal treatment proportions for `Q`.
pub fn optimize_weights(
    q: &ContrastSystem,
    crit: Criterion,
    opts: &OptimizerOptions,
) -> Result<OptimizedWeights> {
    let v = q.v();
    let closed = |weights: TreatmentWeights| -> Result<OptimizedWeights> {
        let value = crate::criteria::weights_value(&weights, q, crit)?;
        Ok(OptimizedWeights {
            weights,
            value,
            converged: true,
            iterations: 0,
            stationarity: 0.0,
        })
    };
    match (crit, q.kind()) {
        (Criterion::Mv, ContrastKind::Controls { g }) => closed(mv_weights(v, g)?),
        (Criterion::Mv, _) => Err(Error::UnsupportedCriterion(
            "MV-optimal weights are only available for comparisons with controls".into(),
        )),
        (Criterion::Phi(_), _) if complete_symmetry_factor(q).is_some() => {
            closed(uniform_weights(v))
        }
        (Criterion::Phi(p), ContrastKind::Controls { g }) => closed(controls_weights(v, g, p)?),
        (Criterion::Phi(Exponent::NegInfinity), _) => Err(Error::UnsupportedCriterion(
            "E-optimal weights need a completely symmetric or controls contrast system".into(),
        )),
        (Criterion::Phi(Exponent::Finite(p)), _) => optimize_weights_generic(q, p, opts),
    }
}

/// `log Φ_p(C_Q(w))` and its gradient in `w`.
struct LogPhi<'a> {
    q: &'a ContrastSystem,
    p: f64,
    rank: usize,
}

impl LogPhi<'_> {
    fn value(&self, w: &[f64]) -> f64 {
        match self.spectrum(w) {
            Some((mu, _)) => self.log_phi(&mu),
            None => f64::NEG_INFINITY,
        }
    }

    /// Nonzero eigenvalues of `V = Qᵀ diag(w⁻¹) Q` with their eigenvectors.
    fn spectrum(&self, w: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        if w.iter().any(|&x| x <= 0.0) {
            return None;
        }
        let tw = TreatmentWeights::with_tolerance(w.to_vec(), 1e-6).ok()?;
        let var = weights_variance(&tw, self.q).ok()?;
        let eig = sym_eigen(&var);
        let s = eig.values.len();
        let thr = RANK_CUTOFF * eig.max_abs();
        let keep: Vec<usize> = (0..s)
            .rev()
            .take(self.rank)
            .filter(|&i| eig.values[i] > thr)
            .collect();
        if keep.len() < self.rank {
            return None;
        }
        let mu = keep.iter().map(|&i| eig.values[i]).collect();
        let vecs = DMatrix::from_fn(s, keep.len(), |r, c| eig.vectors[(r, keep[c])]);
        Some((mu, vecs))
    }

    fn log_phi(&self, mu: &[f64]) -> f64 {
        let r = mu.len() as f64;
        if self.p == 0.0 {
            -mu.iter().map(|m| m.ln()).sum::<f64>() / r
        } else {
            let q = -self.p;
            let mmax = mu.iter().copied().fold(0.0, f64::max);
            let mean = mu.iter().map(|m| (m / mmax).powf(q)).sum::<f64>() / r;
            -(mmax.ln() + mean.ln() / q)
        }
    }

    fn value_and_gradient(&self, w: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (mu, vecs) = self.spectrum(w)?;
        let value = self.log_phi(&mu);
        let r = mu.len() as f64;
        let coef: Vec<f64> = if self.p == 0.0 {
            mu.iter().map(|m| 1.0 / (r * m)).collect()
        } else {
            let q = -self.p;
            let mmax = mu.iter().copied().fold(0.0, f64::max);
            let total: f64 = mu.iter().map(|m| (m / mmax).powf(q)).sum();
            mu.iter()
                .map(|m| (m / mmax).powf(q) / (total * m))
                .collect()
        };
        // ∂/∂w_u = w_u⁻² Σ_i c_i (Q_u · U_i)².
        let proj = self.q.q() * &vecs;
        let grad = (0..w.len())
            .map(|u| {
                let s: f64 = (0..mu.len()).map(|i| coef[i] * proj[(u, i)].powi(2)).sum();
                s / (w[u] * w[u])
            })
            .collect();
        Some((value, grad))
    }
}

fn projected_norm(grad: &[f64]) -> f64 {
    let mean = grad.iter().sum::<f64>() / grad.len() as f64;
    grad.iter().map(|g| (g - mean).powi(2)).sum::<f64>().sqrt()
}

fn ascend(
    obj: &LogPhi<'_>,
    start: Vec<f64>,
    opts: &OptimizerOptions,
) -> (Vec<f64>, f64, bool, usize, f64) {
    let mut w = start;
    let (mut f, mut g) = obj
        .value_and_gradient(&w)
        .expect("interior start point is feasible");
    // Multiplicative-algorithm exponent; larger steps oscillate.
    let max_step = 1.0 / (1.0 - obj.p);
    let mut step = max_step;
    let mut stat = projected_norm(&g);
    for it in 0..opts.max_iter {
        if stat <= opts.tol {
            return (w, f, true, it, stat);
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut cand: Vec<f64> = w
                .iter()
                .zip(&g)
                .map(|(wi, gi)| wi * (step * (gi - 1.0)).clamp(-50.0, 50.0).exp())
                .collect();
            let total: f64 = cand.iter().sum();
            cand.iter_mut().for_each(|x| *x /= total);
            let fc = obj.value(&cand);
            let dir: f64 = cand
                .iter()
                .zip(&w)
                .zip(&g)
                .map(|((c, wi), gi)| gi * (c - wi))
                .sum();
            if !fc.is_finite() {
                step *= 0.5;
                continue;
            }
            let ascent = fc >= f + 1e-4 * dir;
            // Near the optimum value changes drown in rounding; fall back to
            // a decrease of the stationarity measure.
            let level = fc >= f - 1e-14 * f.abs().max(1.0);
            if ascent || level {
                if let Some((fv, gv)) = obj.value_and_gradient(&cand) {
                    if ascent || projected_norm(&gv) < stat {
                        w = cand;
                        f = fv;
                        g = gv;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        stat = projected_norm(&g);
        if !accepted {
            // No ascent direction left at working precision.
            let converged = stat <= opts.tol.max(1e-7);
            return (w, f, converged, it, stat);
        }
        step = (step * 2.0).min(max_step);
    }
    let converged = stat <= opts.tol;
    (w, f, converged, opts.max_iter, stat)
}

/// Mirror-ascent maximization of `Φ_p(C_Q(w))` over the open simplex,
/// started from the uniform weights and `opts.restarts` random points.
pub fn optimize_weights_generic(
    q: &ContrastSystem,
    p: f64,
    opts: &OptimizerOptions,
) -> Result<OptimizedWeights> {
    if !p.is_finite() || p > 0.0 {
        return Err(Error::InvalidP(p));
    }
    let v = q.v();
    let obj = LogPhi {
        q,
        p,
        rank: q.rank(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![vec![1.0 / v as f64; v]];
    for _ in 0..opts.restarts {
        let raw: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        starts.push(raw.into_iter().map(|x| x / total).collect());
    }
    let runs: Vec<_> = starts
        .into_par_iter()
        .map(|s| ascend(&obj, s, opts))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| {
            if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) {
                b
            } else {
                a
            }
        })
        .expect("at least one start");
    let (w, logv, converged, iterations, stationarity) = best;
    Ok(OptimizedWeights {
        weights: TreatmentWeights::with_tolerance(w, 1e-9)?,
        value: logv.exp(),
        converged,
        iterations,
        stationarity,
    })
}
