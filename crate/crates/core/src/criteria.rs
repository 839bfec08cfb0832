//! Kiefer's Φ_p family (p ≤ 0) and the MV criterion.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contrasts::{check_controls, ContrastSystem};
use crate::design::{self, Design, TreatmentWeights};
use crate::error::{Error, Result};
use crate::linalg::{self, sym_eigen};
use crate::tol::Tolerances;

/// Exponent of a Φ_p criterion; `p = −∞` is its own variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exponent {
    Finite(f64),
    NegInfinity,
}

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p == f64::NEG_INFINITY {
            Ok(Exponent::NegInfinity)
        } else if p.is_nan() || p > 0.0 {
            Err(Error::InvalidP(p))
        } else {
            Ok(Exponent::Finite(p))
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Exponent::Finite(p) => p,
            Exponent::NegInfinity => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    Phi(Exponent),
    /// Minimize the largest variance among the contrasts.
    Mv,
}

impl Criterion {
    pub const D: Criterion = Criterion::Phi(Exponent::Finite(0.0));
    pub const A: Criterion = Criterion::Phi(Exponent::Finite(-1.0));
    pub const E: Criterion = Criterion::Phi(Exponent::NegInfinity);

    pub fn phi(p: f64) -> Result<Self> {
        Ok(Criterion::Phi(Exponent::new(p)?))
    }

    /// Strict concavity holds for finite `p`; E and MV are only concave.
    pub fn is_strictly_concave(&self) -> bool {
        matches!(self, Criterion::Phi(Exponent::Finite(_)))
    }

    pub fn minimizes(&self) -> bool {
        matches!(self, Criterion::Mv)
    }

    /// Whether value `a` beats value `b` under this criterion.
    pub fn is_better(&self, a: f64, b: f64) -> bool {
        if self.minimizes() {
            a < b
        } else {
            a > b
        }
    }

    /// The worst attainable value (used for infeasible designs).
    pub fn worst_value(&self) -> f64 {
        if self.minimizes() {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Criterion::Mv => f.write_str("MV"),
            Criterion::Phi(Exponent::NegInfinity) => f.write_str("E"),
            Criterion::Phi(Exponent::Finite(0.0)) => f.write_str("D"),
            Criterion::Phi(Exponent::Finite(-1.0)) => f.write_str("A"),
            Criterion::Phi(Exponent::Finite(p)) => write!(f, "p={p}"),
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_uppercase().as_str() {
            "D" => return Ok(Criterion::D),
            "A" => return Ok(Criterion::A),
            "E" => return Ok(Criterion::E),
            "MV" => return Ok(Criterion::Mv),
            _ => {}
        }
        let rest = s
            .strip_prefix("p=")
            .or_else(|| s.strip_prefix("P="))
            .ok_or_else(|| Error::Parse(format!("unknown criterion '{s}'")))?;
        let p = match rest.trim() {
            "-inf" | "-infinity" | "-∞" => f64::NEG_INFINITY,
            r => r
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad exponent in '{s}'")))?,
        };
        Criterion::phi(p)
    }
}

impl Serialize for Criterion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Criterion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Φ_p of a list of strictly positive eigenvalues.
pub fn phi_of_eigenvalues(values: &[f64], p: Exponent) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let s = values.len() as f64;
    match p {
        Exponent::NegInfinity => values.iter().copied().fold(f64::INFINITY, f64::min),
        Exponent::Finite(0.0) => (values.iter().map(|l| l.ln()).sum::<f64>() / s).exp(),
        Exponent::Finite(p) => {
            // Factor out the smallest eigenvalue so λ^p stays bounded.
            let lmin = values.iter().copied().fold(f64::INFINITY, f64::min);
            let mean = values.iter().map(|l| (l / lmin).powf(p)).sum::<f64>() / s;
            lmin * mean.powf(1.0 / p)
        }
    }
}

/// Φ_p of a symmetric PSD matrix; singular matrices score zero.
pub fn phi_p(h: &DMatrix<f64>, p: Exponent) -> f64 {
    let eig = sym_eigen(h);
    let Some(&lmax) = eig.values.last() else {
        return 0.0;
    };
    let lmin = eig.values[0];
    if lmax <= 0.0 || lmin <= linalg::RANK_CUTOFF * lmax {
        return 0.0;
    }
    phi_of_eigenvalues(&eig.values, p)
}

/// Φ_p applied to the `rank` largest eigenvalues; zero when fewer than
/// `rank` eigenvalues are positive.
pub fn phi_p_positive(h: &DMatrix<f64>, rank: usize, p: Exponent) -> f64 {
    let positive = sym_eigen(h).positive_values(linalg::RANK_CUTOFF);
    if positive.len() < rank || rank == 0 {
        return 0.0;
    }
    phi_of_eigenvalues(&positive[..rank], p)
}

/// Largest diagonal entry of `Qᵀ diag(w⁻¹) Q`.
pub fn mv_value(w: &TreatmentWeights, q: &ContrastSystem) -> Result<f64> {
    let var = design::weights_variance(w, q)?;
    Ok(var
        .diagonal()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Criterion value of treatment proportions in the nuisance-free model.
pub fn weights_value(w: &TreatmentWeights, q: &ContrastSystem, crit: Criterion) -> Result<f64> {
    match crit {
        Criterion::Mv => mv_value(w, q),
        Criterion::Phi(p) => {
            if w.first_zero().is_some() {
                return Ok(0.0);
            }
            let c = design::weights_c_matrix(w, q, linalg::RANK_CUTOFF)?;
            Ok(phi_p_positive(&c.c, q.rank(), p))
        }
    }
}

/// Criterion value of a design; infeasible designs get the worst value.
pub fn design_value(
    xi: &Design,
    q: &ContrastSystem,
    crit: Criterion,
    tol: &Tolerances,
) -> Result<f64> {
    match crit {
        Criterion::Mv => match design::variance_matrix(xi, q, tol) {
            Ok(var) => Ok(var
                .diagonal()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)),
            Err(Error::InfeasibleDesign) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        },
        Criterion::Phi(p) => match design::c_matrix(xi, q, tol) {
            Ok(c) => Ok(phi_p_positive(&c.c, q.rank(), p)),
            Err(Error::InfeasibleDesign) => Ok(0.0),
            Err(e) => Err(e),
        },
    }
}

/// Ratio of a design value to the optimum, inverted for MV; clipped to `[0, 1 + 1e-9]`.
pub fn efficiency_from_values(value: f64, optimal_value: f64, crit: Criterion) -> f64 {
    let ratio = if crit.minimizes() {
        if value.is_finite() && value > 0.0 {
            optimal_value / value
        } else {
            0.0
        }
    } else {
        value / optimal_value
    };
    ratio.clamp(0.0, 1.0 + 1e-9)
}

pub fn efficiency(
    xi: &Design,
    q: &ContrastSystem,
    crit: Criterion,
    optimal_value: f64,
    tol: &Tolerances,
) -> Result<f64> {
    if optimal_value.is_nan() || optimal_value <= 0.0 {
        return Err(Error::InvalidWeights(format!(
            "optimal value {optimal_value} must be positive"
        )));
    }
    let value = design_value(xi, q, crit, tol)?;
    Ok(efficiency_from_values(value, optimal_value, crit))
}

/// Nonzero eigenvalues of `C_Q(w_γ)` for comparisons with `g` controls,
/// as `(value, multiplicity)` pairs; `gamma` is the total control weight.
pub fn controls_spectrum(v: usize, g: usize, gamma: f64) -> Result<Vec<(f64, usize)>> {
    check_controls(v, g)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidWeights(format!(
            "gamma = {gamma} must lie in (0, 1)"
        )));
    }
    let (vf, gf) = (v as f64, g as f64);
    let g1 = gamma / gf;
    let rest = 1.0 - gf * g1;
    let spectrum = [
        (rest / (gf * (vf - gf)), v - g - 1),
        (g1 / (vf - gf), g - 1),
        (g1 * rest / (vf - gf), 1),
    ];
    Ok(spectrum.into_iter().filter(|&(_, m)| m > 0).collect())
}
