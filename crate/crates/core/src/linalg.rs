//! Dense symmetric helpers built on a symmetric eigendecomposition.
//!
//! Every rank decision uses a relative cutoff: eigenvalues (or singular
//! values) at or below `cutoff * max` are treated as zero.

use nalgebra::{DMatrix, SymmetricEigen};

/// Default relative cutoff for rank decisions.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Eigenvalues (ascending) and matching eigenvector columns of the
/// symmetric part of `m`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn sym_eigen(m: &DMatrix<f64>) -> SymEigen {
    assert!(m.is_square(), "sym_eigen needs a square matrix");
    let n = m.nrows();
    if n == 0 {
        return SymEigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    SymEigen { values, vectors }
}

impl SymEigen {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Threshold below which an eigenvalue counts as zero.
    pub fn threshold(&self, cutoff: f64) -> f64 {
        cutoff * self.max_abs()
    }

    pub fn rank(&self, cutoff: f64) -> usize {
        let thr = self.threshold(cutoff);
        let max = self.max_abs();
        if max == 0.0 {
            return 0;
        }
        self.values.iter().filter(|v| v.abs() > thr).count()
    }

    /// Eigenvalues above the cutoff, in descending order.
    pub fn positive_values(&self, cutoff: f64) -> Vec<f64> {
        let thr = self.threshold(cutoff);
        let mut out: Vec<f64> = self
            .values
            .iter()
            .copied()
            .filter(|&v| v > thr && v > 0.0)
            .collect();
        out.reverse();
        out
    }

    /// `Σ f(λ) u uᵀ` over the eigenpairs whose eigenvalue is above the cutoff.
    pub fn spectral_map(&self, cutoff: f64, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let thr = self.threshold(cutoff);
        let mut out = DMatrix::zeros(n, n);
        if self.max_abs() == 0.0 {
            return out;
        }
        for (k, &lambda) in self.values.iter().enumerate() {
            if lambda.abs() <= thr {
                continue;
            }
            let col = self.vectors.column(k);
            out += (col * col.transpose()) * f(lambda);
        }
        out
    }
}

/// Moore–Penrose inverse of a symmetric matrix together with its rank.
pub fn pinv_sym(m: &DMatrix<f64>, cutoff: f64) -> (DMatrix<f64>, usize) {
    let eig = sym_eigen(m);
    let rank = eig.rank(cutoff);
    (symmetrize(&eig.spectral_map(cutoff, |l| 1.0 / l)), rank)
}

/// Rank of an arbitrary matrix from its singular values.
pub fn matrix_rank(m: &DMatrix<f64>, cutoff: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().fold(0.0_f64, |a, v| a.max(*v));
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > cutoff * max).count()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).values.first().copied().unwrap_or(0.0)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigen(m).values.last().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_singular_projection() {
        // I - J/3 is its own pseudo-inverse.
        let p = DMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 / 3.0 } else { -1.0 / 3.0 });
        let (pi, rank) = pinv_sym(&p, RANK_CUTOFF);
        assert_eq!(rank, 2);
        assert!(max_abs_diff(&pi, &p) < 1e-12);
    }

    #[test]
    fn pinv_matches_svd_route() {
        let b = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0, -2.0, 1.0]);
        let m = &b * b.transpose();
        let (pi, rank) = pinv_sym(&m, RANK_CUTOFF);
        assert_eq!(rank, 2);
        let oracle = m.clone().pseudo_inverse(1e-12).unwrap();
        assert!(max_abs_diff(&pi, &oracle) < 1e-10);
    }

    #[test]
    fn positive_values_descending() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 4.0, 1.0]));
        let eig = sym_eigen(&m);
        assert_eq!(eig.positive_values(RANK_CUTOFF), vec![4.0, 1.0]);
        assert_eq!(eig.rank(RANK_CUTOFF), 2);
    }

    #[test]
    #[rustfmt::skip]
    #[allow(clippy::excessive_precision)]
    fn eigen_reconstructs_rank_deficient_moment_matrix() {
        let m = DMatrix::from_row_slice(7, 7, &[
            0.08829268294707045, 0.0, 0.0, 0.0, 0.0, 0.24698314959851575, 0.05557224675606743,
            0.0, 0.24434844507872025, 0.0, 0.0, 0.0, 0.68352151674018957, 0.15379521418005093,
            0.0, 0.0, 0.08987437685174854, 0.0, 0.0, 0.25140765828076239, 0.05656777980625270,
            0.0, 0.0, 0.0, 0.23692916183357726, 0.0, 0.66276738533897916, 0.14912544738296074,
            0.0, 0.0, 0.0, 0.0, 0.34055533328888354, 0.95264325446632636, 0.21434873631566953,
            0.24698314959851575, 0.68352151674018957, 0.25140765828076239, 0.66276738533897916,
            0.95264325446632636, 7.85109836679824369, 1.71046675615391819,
            0.05557224675606743, 0.15379521418005093, 0.05656777980625270, 0.14912544738296074,
            0.21434873631566953, 1.71046675615391797, 0.49275341998039390,
        ]);
        let eig = sym_eigen(&m);
        let rec = eig.spectral_map(0.0, |l| l);
        assert!(max_abs_diff(&rec, &symmetrize(&m)) < 1e-12);
        let (pi, rank) = pinv_sym(&m, RANK_CUTOFF);
        assert_eq!(rank, 6);
        assert!(max_abs_diff(&(&m * &pi * &m), &m) < 1e-10);
    }

    #[test]
    fn rank_of_collinear_regressor() {
        // Block indicators plus a constant column: rank 4 of 6.
        let mut b = DMatrix::zeros(15, 6);
        for t in 0..15 {
            b[(t, 0)] = 1.0;
            b[(t, 1 + t / 5)] = 1.0;
            b[(t, 4)] = 1.0;
            b[(t, 5)] = 1.0 - 0.5 * (t % 5) as f64;
        }
        assert_eq!(matrix_rank(&b, RANK_CUTOFF), 4);
        assert_eq!(matrix_rank(&b.transpose(), RANK_CUTOFF), 4);
    }

    #[test]
    fn empty_matrix() {
        let m = DMatrix::<f64>::zeros(0, 0);
        let (pi, rank) = pinv_sym(&m, RANK_CUTOFF);
        assert_eq!(rank, 0);
        assert_eq!(pi.nrows(), 0);
        assert_eq!(matrix_rank(&m, RANK_CUTOFF), 0);
    }
}
