//! Systems of treatment contrasts `Qᵀτ`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_CUTOFF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ContrastKind {
    Orthonormal,
    Centered,
    Pairwise,
    Controls { g: usize },
    Custom,
}

/// A `v × s` contrast matrix with zero column sums and no all-zero row.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSystem {
    q: DMatrix<f64>,
    kind: ContrastKind,
}

const ZERO_TOL: f64 = 1e-12;

impl ContrastSystem {
    /// Validates a user-supplied contrast matrix (rows are treatments).
    pub fn custom(q: DMatrix<f64>) -> Result<Self> {
        Self::validate(&q)?;
        Ok(ContrastSystem {
            q,
            kind: ContrastKind::Custom,
        })
    }

    fn validate(q: &DMatrix<f64>) -> Result<()> {
        let (v, s) = q.shape();
        if v < 2 {
            return Err(Error::InvalidContrast(format!(
                "need at least 2 treatments, got {v}"
            )));
        }
        if s == 0 {
            return Err(Error::InvalidContrast("no contrasts".into()));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidContrast("non-finite entry".into()));
        }
        for (j, col) in q.column_iter().enumerate() {
            let sum: f64 = col.iter().sum();
            let scale: f64 = col.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
            if sum.abs() > ZERO_TOL * scale {
                return Err(Error::InvalidContrast(format!(
                    "column {} sums to {sum:e}, not zero",
                    j + 1
                )));
            }
        }
        for (i, row) in q.row_iter().enumerate() {
            if row.iter().all(|x| x.abs() <= ZERO_TOL) {
                return Err(Error::InvalidContrast(format!(
                    "treatment {} does not appear in any contrast",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn kind(&self) -> ContrastKind {
        self.kind
    }

    pub fn v(&self) -> usize {
        self.q.nrows()
    }

    pub fn s(&self) -> usize {
        self.q.ncols()
    }

    pub fn rank(&self) -> usize {
        linalg::matrix_rank(&self.q, RANK_CUTOFF)
    }

    /// The block `K = (Qᵀ, 0)ᵀ` for a model with `d` nuisance parameters.
    pub fn k_matrix(&self, d: usize) -> DMatrix<f64> {
        let mut k = DMatrix::zeros(self.v() + d, self.s());
        k.rows_mut(0, self.v()).copy_from(&self.q);
        k
    }
}

fn check_v(v: usize) -> Result<()> {
    if v < 2 {
        return Err(Error::InvalidContrast(format!(
            "need at least 2 treatments, got {v}"
        )));
    }
    Ok(())
}

/// Helmert contrasts: column `k` compares treatment `k+1` with the mean of
/// treatments `1..=k`, scaled to unit length.
pub fn orthonormal_contrasts(v: usize) -> Result<ContrastSystem> {
    check_v(v)?;
    let mut q = DMatrix::zeros(v, v - 1);
    for k in 1..v {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i, k - 1)] = -1.0 / norm;
        }
        q[(k, k - 1)] = k as f64 / norm;
    }
    Ok(ContrastSystem {
        q,
        kind: ContrastKind::Orthonormal,
    })
}

/// `Q = I_v − J_v / v`.
pub fn centered_contrasts(v: usize) -> Result<ContrastSystem> {
    check_v(v)?;
    let q = DMatrix::from_fn(v, v, |i, j| {
        let base = -1.0 / v as f64;
        if i == j {
            1.0 + base
        } else {
            base
        }
    });
    Ok(ContrastSystem {
        q,
        kind: ContrastKind::Centered,
    })
}

/// All comparisons `τ_i − τ_j`, `i > j`.
pub fn pairwise_contrasts(v: usize) -> Result<ContrastSystem> {
    check_v(v)?;
    let s = v * (v - 1) / 2;
    let mut q = DMatrix::zeros(v, s);
    let mut col = 0;
    for i in 1..v {
        for j in 0..i {
            q[(i, col)] = 1.0;
            q[(j, col)] = -1.0;
            col += 1;
        }
    }
    Ok(ContrastSystem {
        q,
        kind: ContrastKind::Pairwise,
    })
}

pub fn check_controls(v: usize, g: usize) -> Result<()> {
    if g == 0 || 2 * g >= v {
        return Err(Error::InvalidControlCount { v, g });
    }
    Ok(())
}

/// Comparisons `τ_j − τ_i` of every treatment `j > g` with every control `i ≤ g`.
pub fn controls_contrasts(v: usize, g: usize) -> Result<ContrastSystem> {
    check_controls(v, g)?;
    let mut q = DMatrix::zeros(v, g * (v - g));
    for i in 0..g {
        for j in 0..(v - g) {
            let col = i * (v - g) + j;
            q[(i, col)] = -1.0;
            q[(g + j, col)] = 1.0;
        }
    }
    Ok(ContrastSystem {
        q,
        kind: ContrastKind::Controls { g },
    })
}

/// Returns `Some(a)` when `QQᵀ = a (I − J/v)` with `a > 0`.
pub fn complete_symmetry_factor(q: &ContrastSystem) -> Option<f64> {
    let v = q.v();
    let qqt = q.q() * q.q().transpose();
    let a = qqt.trace() / (v as f64 - 1.0);
    if a <= 0.0 {
        return None;
    }
    let target = DMatrix::from_fn(v, v, |i, j| {
        let base = -a / v as f64;
        if i == j {
            a + base
        } else {
            base
        }
    });
    (linalg::max_abs_diff(&qqt, &target) <= 1e-10).then_some(a)
}

pub fn is_completely_symmetric(q: &ContrastSystem) -> bool {
    complete_symmetry_factor(q).is_some()
}
