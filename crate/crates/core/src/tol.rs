use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by the predicates and matrix functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative eigenvalue cutoff for pseudo-inverses and rank decisions.
    pub rank_cutoff: f64,
    /// Allowed deviation of total weight from one.
    pub weight_sum: f64,
    /// `‖(I − MM⁺)K‖_max` bound for estimability.
    pub feasibility: f64,
    /// `‖M G K − K‖_max` bound for the resistance certificate.
    pub certificate: f64,
    /// Residual bound for balance and resistance.
    pub resistance: f64,
    /// Weight gap and resistance bound used by the optimality verifier.
    pub optimality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank_cutoff: 1e-10,
            weight_sum: 1e-12,
            feasibility: 1e-8,
            certificate: 1e-9,
            resistance: 1e-9,
            optimality: 1e-6,
        }
    }
}

impl Tolerances {
    /// Looser settings for designs read back from rounded published tables.
    pub fn table_input(tol: f64) -> Self {
        Tolerances {
            weight_sum: tol,
            certificate: tol,
            resistance: tol,
            optimality: tol,
            ..Default::default()
        }
    }
}
