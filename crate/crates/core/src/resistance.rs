//! Balance and nuisance-resistance predicates and the optimality verifier.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::contrasts::ContrastSystem;
use crate::criteria::{self, Criterion, Exponent};
use crate::design::{Design, DesignSpace, NuisanceWeights, TreatmentWeights};
use crate::error::{Error, Result};
use crate::tol::Tolerances;
use crate::weights::{optimize_weights, OptimizerOptions};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResistanceReport {
    pub is_resistant: bool,
    pub is_balanced: bool,
    /// Residual of the predicate that produced the report.
    pub max_residual: f64,
    /// Per nuisance regressor, the largest absolute residual.
    pub per_regressor_residuals: Vec<f64>,
}

/// `d × v` matrix whose column `u` is `w_u⁻¹ Σ_t ξ(u,t) h(t)`.
pub fn barycentres(xi: &Design) -> Result<DMatrix<f64>> {
    let space = xi.space();
    let w = xi.treatment_marginal();
    if let Some(u) = w.iter().position(|&x| x <= 0.0) {
        return Err(Error::ZeroTreatmentWeight(u + 1));
    }
    let h = space.regressor();
    let mut s = DMatrix::zeros(space.d(), space.v());
    for (u, t, x) in xi.cells() {
        for k in 0..space.d() {
            s[(k, u)] += x * h[(t, k)];
        }
    }
    for (u, wu) in w.iter().enumerate() {
        s.column_mut(u).unscale_mut(*wu);
    }
    Ok(s)
}

fn row_max(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter()
        .map(|r| r.iter().fold(0.0f64, |a, x| a.max(x.abs())))
        .collect()
}

fn spread(s: &DMatrix<f64>) -> DMatrix<f64> {
    let first = s.column(0).clone_owned();
    DMatrix::from_fn(s.nrows(), s.ncols(), |k, u| s[(k, u)] - first[k])
}

fn report(resistant: bool, balanced: bool, per: Vec<f64>) -> ResistanceReport {
    let max_residual = per.iter().copied().fold(0.0, f64::max);
    ResistanceReport {
        is_resistant: resistant,
        is_balanced: balanced,
        max_residual,
        per_regressor_residuals: per,
    }
}

/// Resistance to nuisance effects: the barycentre matrix annihilates `Q`.
pub fn is_resistant(xi: &Design, q: &ContrastSystem, tol: f64) -> Result<ResistanceReport> {
    if q.v() != xi.space().v() {
        return Err(Error::InvalidContrast(
            "contrast rows do not match treatments".into(),
        ));
    }
    let s = barycentres(xi)?;
    let per = row_max(&(&s * q.q()));
    let balanced = row_max(&spread(&s)).iter().all(|&r| r <= tol);
    let resistant = per.iter().all(|&r| r <= tol);
    Ok(report(resistant, balanced, per))
}

/// Equal barycentres for all treatments. A balanced design is resistant for
/// every contrast system, so `is_resistant` mirrors `is_balanced` here.
pub fn is_balanced(xi: &Design, tol: f64) -> Result<ResistanceReport> {
    let s = barycentres(xi)?;
    let per = row_max(&spread(&s));
    let balanced = per.iter().all(|&r| r <= tol);
    Ok(report(balanced, balanced, per))
}

/// Balance for designs with uniform nuisance marginal: every barycentre
/// equals the plain mean of `h` over the conditions.
pub fn is_balanced_uniform_alpha(xi: &Design, tol: f64) -> Result<ResistanceReport> {
    let space = xi.space();
    let n = space.n() as f64;
    let alpha = xi.nuisance_marginal();
    let dev = alpha
        .iter()
        .map(|a| (a - 1.0 / n).abs())
        .fold(0.0, f64::max);
    if dev > 1e-9 {
        return Err(Error::NonUniformAlpha(dev));
    }
    let s = barycentres(xi)?;
    let mean: Vec<f64> = space
        .regressor()
        .column_iter()
        .map(|c| c.sum() / n)
        .collect();
    let per: Vec<f64> = (0..space.d())
        .map(|k| {
            (0..space.v())
                .map(|u| (s[(k, u)] - mean[k]).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let balanced = per.iter().all(|&r| r <= tol);
    Ok(report(balanced, balanced, per))
}

/// `ξ(u,t) = w_u α_t`.
pub fn product_design(
    space: Arc<DesignSpace>,
    w: &TreatmentWeights,
    alpha: &NuisanceWeights,
) -> Result<Design> {
    if w.len() != space.v() || alpha.as_slice().len() != space.n() {
        return Err(Error::InvalidDesign(
            "marginals do not match the design space".into(),
        ));
    }
    let cells: Vec<_> = w
        .as_slice()
        .iter()
        .enumerate()
        .flat_map(|(u, &wu)| {
            alpha
                .as_slice()
                .iter()
                .enumerate()
                .map(move |(t, &a)| (u, t, wu * a))
        })
        .collect();
    Design::with_tolerance(space, cells, 1e-9)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalityReport {
    pub optimal: bool,
    /// True when the criterion is not strictly concave, so a negative verdict
    /// does not rule out optimality.
    pub sufficient_only: bool,
    pub weight_gap: f64,
    pub resistance_residual: f64,
    pub is_resistant: bool,
    pub is_balanced: bool,
    pub optimal_weights: Vec<f64>,
    pub criterion_value: f64,
    pub optimal_value: f64,
    pub efficiency: f64,
}

/// A design is optimal iff its treatment marginal is optimal and it is
/// resistant (for strictly concave criteria; sufficient otherwise).
pub fn verify_optimality(
    xi: &Design,
    q: &ContrastSystem,
    crit: Criterion,
    tol: &Tolerances,
    opts: &OptimizerOptions,
) -> Result<OptimalityReport> {
    let opt = optimize_weights(q, crit, opts)?.into_result()?;
    verify_against(xi, q, crit, &opt.weights, opt.value, tol)
}

/// As [`verify_optimality`] with known optimal weights and value.
pub fn verify_against(
    xi: &Design,
    q: &ContrastSystem,
    crit: Criterion,
    w_star: &TreatmentWeights,
    optimal_value: f64,
    tol: &Tolerances,
) -> Result<OptimalityReport> {
    let w = xi.treatment_weights();
    let weight_gap = w.max_abs_diff(w_star);
    let (resistance_residual, is_resistant, is_balanced) = if w.first_zero().is_some() {
        (f64::INFINITY, false, false)
    } else {
        let r = is_resistant(xi, q, tol.optimality)?;
        (r.max_residual, r.is_resistant, r.is_balanced)
    };
    let value = criteria::design_value(xi, q, crit, tol)?;
    let efficiency = criteria::efficiency_from_values(value, optimal_value, crit);
    let sufficient_only = !matches!(crit, Criterion::Phi(Exponent::Finite(_)));
    Ok(OptimalityReport {
        optimal: weight_gap <= tol.optimality && resistance_residual <= tol.optimality,
        sufficient_only,
        weight_gap,
        resistance_residual,
        is_resistant,
        is_balanced,
        optimal_weights: w_star.as_slice().to_vec(),
        criterion_value: value,
        optimal_value,
        efficiency,
    })
}
