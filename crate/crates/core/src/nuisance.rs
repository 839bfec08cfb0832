//! Regressors `h` for the common nuisance structures.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::design::{Design, DesignSpace};
use crate::error::{Error, Result};

/// Parameters of a nuisance structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelKind {
    /// Discrete orthogonal polynomials of degrees `0..=degree` on `t = 1..n`.
    Poly {
        n: usize,
        degree: usize,
    },
    /// Constant plus `cos(kφt)`, `sin(kφt)` for `k = 1..=degree`, `φ = 2π/n`.
    Trig {
        n: usize,
        degree: usize,
    },
    /// Constant plus `e^t / Σ_j e^j`.
    Exp {
        n: usize,
    },
    Block {
        blocks: usize,
    },
    #[serde(rename = "rowcol")]
    RowColumn {
        rows: usize,
        cols: usize,
    },
    /// `blocks` blocks of `blocksize` positions with a common polynomial trend.
    #[serde(rename = "blocktrend")]
    BlockTrend {
        blocks: usize,
        blocksize: usize,
        degree: usize,
    },
    Custom,
}

/// A regressor table with condition labels.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceModel {
    pub kind: ModelKind,
    pub labels: Vec<String>,
    /// `n × d`, one row per condition.
    pub regressor: DMatrix<f64>,
}

impl NuisanceModel {
    pub fn n(&self) -> usize {
        self.regressor.nrows()
    }

    pub fn d(&self) -> usize {
        self.regressor.ncols()
    }

    pub fn space(&self, v: usize) -> Result<DesignSpace> {
        DesignSpace::new(v, self.labels.clone(), self.regressor.clone())
    }

    pub fn build(kind: &ModelKind) -> Result<Self> {
        match *kind {
            ModelKind::Poly { n, degree } => build_poly_trend(n, degree),
            ModelKind::Trig { n, degree } => build_trig_trend(n, degree),
            ModelKind::Exp { n } => build_exponential_trend(n),
            ModelKind::Block { blocks } => build_block(blocks),
            ModelKind::RowColumn { rows, cols } => build_rowcolumn(rows, cols),
            ModelKind::BlockTrend {
                blocks,
                blocksize,
                degree,
            } => build_blocktrend(blocks, blocksize, degree),
            ModelKind::Custom => Err(Error::InvalidSpace(
                "custom models are built from a regressor table".into(),
            )),
        }
    }

    pub fn custom(labels: Vec<String>, regressor: DMatrix<f64>) -> Result<Self> {
        if labels.len() != regressor.nrows() || labels.is_empty() {
            return Err(Error::InvalidSpace(
                "custom model needs one row per condition".into(),
            ));
        }
        Ok(NuisanceModel {
            kind: ModelKind::Custom,
            labels,
            regressor,
        })
    }
}

fn numbered(n: usize) -> Vec<String> {
    (1..=n).map(|t| t.to_string()).collect()
}

fn check_size(what: &str, x: usize) -> Result<()> {
    if x == 0 {
        return Err(Error::InvalidSpace(format!("{what} must be at least 1")));
    }
    Ok(())
}

/// Orthogonal polynomial values on `t = 1..=n`, `n × (degree + 1)`,
/// normalized so that `p₀ ≡ 1` and `p_i(1) = 1`.
pub fn orthogonal_polynomials(n: usize, degree: usize) -> Result<DMatrix<f64>> {
    check_size("number of conditions", n)?;
    if n < degree + 1 {
        return Err(Error::DegreeTooHigh { n, degree });
    }
    // Monomials in the affinely rescaled variable span the same space as
    // monomials in t and are far better conditioned.
    let x = |t: usize| {
        if n == 1 {
            0.0
        } else {
            (2.0 * t as f64 - (n as f64 + 1.0)) / (n as f64 - 1.0)
        }
    };
    let mut p = DMatrix::from_fn(n, degree + 1, |r, k| x(r + 1).powi(k as i32));
    for k in 0..=degree {
        for _pass in 0..2 {
            for j in 0..k {
                let proj = p.column(k).dot(&p.column(j));
                let col_j = p.column(j).clone_owned();
                p.column_mut(k).axpy(-proj, &col_j, 1.0);
            }
        }
        let norm = p.column(k).norm();
        p.column_mut(k).unscale_mut(norm);
    }
    for k in 0..=degree {
        let first = p[(0, k)];
        p.column_mut(k).unscale_mut(first);
    }
    p.column_mut(0).fill(1.0);
    Ok(p)
}

pub fn build_poly_trend(n: usize, degree: usize) -> Result<NuisanceModel> {
    Ok(NuisanceModel {
        kind: ModelKind::Poly { n, degree },
        labels: numbered(n),
        regressor: orthogonal_polynomials(n, degree)?,
    })
}

pub fn build_trig_trend(n: usize, degree: usize) -> Result<NuisanceModel> {
    check_size("number of conditions", n)?;
    if 2 * degree + 1 > n {
        return Err(Error::DegreeTooHigh { n, degree });
    }
    let phi = 2.0 * PI / n as f64;
    let regressor = DMatrix::from_fn(n, 2 * degree + 1, |r, c| {
        let t = (r + 1) as f64;
        if c == 0 {
            return 1.0;
        }
        let k = c.div_ceil(2) as f64;
        if c % 2 == 1 {
            (k * phi * t).cos()
        } else {
            (k * phi * t).sin()
        }
    });
    Ok(NuisanceModel {
        kind: ModelKind::Trig { n, degree },
        labels: numbered(n),
        regressor,
    })
}

pub fn build_exponential_trend(n: usize) -> Result<NuisanceModel> {
    check_size("number of conditions", n)?;
    let raw: Vec<f64> = (1..=n).map(|t| (t as f64 - n as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    let regressor = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { raw[r] / total });
    Ok(NuisanceModel {
        kind: ModelKind::Exp { n },
        labels: numbered(n),
        regressor,
    })
}

pub fn build_block(blocks: usize) -> Result<NuisanceModel> {
    check_size("number of blocks", blocks)?;
    Ok(NuisanceModel {
        kind: ModelKind::Block { blocks },
        labels: numbered(blocks),
        regressor: DMatrix::identity(blocks, blocks),
    })
}

pub fn build_rowcolumn(rows: usize, cols: usize) -> Result<NuisanceModel> {
    check_size("number of rows", rows)?;
    check_size("number of columns", cols)?;
    let n = rows * cols;
    let mut regressor = DMatrix::zeros(n, rows + cols);
    let mut labels = Vec::with_capacity(n);
    for k in 0..rows {
        for l in 0..cols {
            let t = k * cols + l;
            regressor[(t, k)] = 1.0;
            regressor[(t, rows + l)] = 1.0;
            labels.push(format!("{}:{}", k + 1, l + 1));
        }
    }
    Ok(NuisanceModel {
        kind: ModelKind::RowColumn { rows, cols },
        labels,
        regressor,
    })
}

/// Conditions are `(block, position)` in block-major order with
/// `h = (e_blockᵀ, p(position)ᵀ)ᵀ`.
pub fn build_blocktrend(blocks: usize, blocksize: usize, degree: usize) -> Result<NuisanceModel> {
    check_size("number of blocks", blocks)?;
    let p = orthogonal_polynomials(blocksize, degree)?;
    let n = blocks * blocksize;
    let d = blocks + degree + 1;
    let mut regressor = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for b in 0..blocks {
        for pos in 0..blocksize {
            let t = b * blocksize + pos;
            regressor[(t, b)] = 1.0;
            for k in 0..=degree {
                regressor[(t, blocks + k)] = p[(pos, k)];
            }
            labels.push(format!("{}:{}", b + 1, pos + 1));
        }
    }
    Ok(NuisanceModel {
        kind: ModelKind::BlockTrend {
            blocks,
            blocksize,
            degree,
        },
        labels,
        regressor,
    })
}

/// `m`-fold concatenation of a run order.
pub fn replicate_run_order(order: &[usize], m: usize) -> Vec<usize> {
    order
        .iter()
        .copied()
        .cycle()
        .take(order.len() * m)
        .collect()
}

/// `m`-fold replication of an exact one-trial-per-condition design into `target`.
pub fn replicate_design(xi_p: &Design, m: usize, target: Arc<DesignSpace>) -> Result<Design> {
    let order = xi_p
        .run_order()
        .ok_or_else(|| Error::InvalidDesign("replication needs one trial per condition".into()))?;
    if order.len() * m != target.n() {
        return Err(Error::InvalidDesign(format!(
            "{}-fold replication of {} runs does not fill {} conditions",
            m,
            order.len(),
            target.n()
        )));
    }
    Design::from_run_order(target, &replicate_run_order(&order, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_poly_on_three_points() {
        let p = orthogonal_polynomials(3, 1).unwrap();
        assert_eq!(p.column(0).as_slice(), &[1.0, 1.0, 1.0]);
        let expect = [1.0, 0.0, -1.0];
        for (a, b) in p.column(1).iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn poly_orthogonality_large() {
        for (n, deg) in [(7, 6), (120, 5), (1000, 6)] {
            let p = orthogonal_polynomials(n, deg).unwrap();
            for i in 0..=deg {
                assert!((p[(0, i)] - 1.0).abs() < 1e-12);
                for j in 0..i {
                    let dot = p.column(i).dot(&p.column(j));
                    let scale = p.column(i).norm() * p.column(j).norm();
                    assert!(
                        dot.abs() <= 1e-8 * scale.max(1.0),
                        "n={n} i={i} j={j} dot={dot}"
                    );
                }
            }
        }
        assert!(matches!(
            orthogonal_polynomials(2, 2),
            Err(Error::DegreeTooHigh { .. })
        ));
    }

    #[test]
    fn trig_columns() {
        let m = build_trig_trend(4, 1).unwrap();
        let cos: Vec<f64> = m.regressor.column(1).iter().copied().collect();
        let sin: Vec<f64> = m.regressor.column(2).iter().copied().collect();
        for (a, b) in cos.iter().zip([0.0, -1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in sin.iter().zip([1.0, 0.0, -1.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let m = build_trig_trend(16, 3).unwrap();
        assert_eq!(m.d(), 7);
        for k in 1..7 {
            assert!(m.regressor.column(k).sum().abs() < 1e-12);
        }
        assert!(build_trig_trend(6, 3).is_err());
    }

    #[test]
    fn exponential_column() {
        let m = build_exponential_trend(2).unwrap();
        let e = 1f64.exp();
        let s = e + e * e;
        assert!((m.regressor[(0, 1)] - e / s).abs() < 1e-15);
        assert!((m.regressor[(1, 1)] - e * e / s).abs() < 1e-15);
        let m = build_exponential_trend(100).unwrap();
        assert!((m.regressor.column(1).sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_layouts() {
        let b = build_block(2).unwrap();
        assert_eq!(b.regressor, DMatrix::identity(2, 2));
        let rc = build_rowcolumn(2, 2).unwrap();
        assert_eq!(
            rc.regressor.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(rc.labels[1], "1:2");
        let bt = build_blocktrend(3, 8, 2).unwrap();
        assert_eq!(bt.d(), 6);
        assert_eq!(bt.n(), 24);
    }

    #[test]
    fn replication() {
        assert_eq!(
            replicate_run_order(&[1, 0, 0, 2], 2),
            vec![1, 0, 0, 2, 1, 0, 0, 2]
        );
        assert_eq!(replicate_run_order(&[2, 1], 1), vec![2, 1]);
    }
}
