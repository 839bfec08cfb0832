//! Linear program whose feasible set is the optimal balanced designs with one
//! trial per condition, and its vertex solutions.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::design::{Design, DesignSpace, TreatmentWeights};
use crate::error::{Error, Result};
use crate::linalg::RANK_CUTOFF;
use crate::nuisance::build_blocktrend;
use crate::simplex::{self, SimplexOptions};

pub const DEFAULT_SEED: u64 = 1;

/// `min cᵀx, Ax = b, x ≥ 0`; column `u·n + t` is the weight of cell `(u, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub v: usize,
    pub n: usize,
}

impl LpProblem {
    pub fn column(&self, u: usize, t: usize) -> usize {
        u * self.n + t
    }

    pub fn cell(&self, j: usize) -> (usize, usize) {
        (j / self.n, j % self.n)
    }

    /// `‖Ax − b‖_max` for a design on the same grid.
    pub fn residual(&self, xi: &Design) -> f64 {
        let mut x = DVector::zeros(self.v * self.n);
        for (u, t, w) in xi.cells() {
            x[self.column(u, t)] = w;
        }
        (&self.a * x - &self.b).amax()
    }
}

#[derive(Debug, Clone)]
pub struct VertexSolution {
    pub design: Design,
    pub support_size: usize,
    /// Cells of the basic structural columns.
    pub basis: Vec<(usize, usize)>,
    pub objective: f64,
    /// `v + (v − 1)k + n − 1` with `k` the affine dimension of the regressors.
    pub support_bound: usize,
    pub affine_dimension: usize,
    /// Number of linearly independent constraint rows found by the solver.
    pub lp_rank: usize,
    pub iterations: usize,
}

/// Upper bound on the support of a vertex: `v + (v − 1)k + n − 1`.
pub fn support_bound(space: &DesignSpace) -> usize {
    let k = space.affine_dimension(RANK_CUTOFF);
    space.v() + (space.v() - 1) * k + space.n() - 1
}

/// Rows: treatment marginals `w*`, balance against treatment 1 for every
/// regressor, and weight `1/n` in every condition.
pub fn assemble_lp(space: &DesignSpace, w_star: &TreatmentWeights, seed: u64) -> Result<LpProblem> {
    let (v, n, d) = (space.v(), space.n(), space.d());
    if w_star.len() != v {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {v} treatments",
            w_star.len()
        )));
    }
    if let Some(u) = w_star.first_zero() {
        return Err(Error::SingularWeights(u + 1));
    }
    let w = w_star.as_slice();
    let h = space.regressor();
    let rows = v + d * (v - 1) + n;
    let mut a = DMatrix::zeros(rows, v * n);
    let mut b = DVector::zeros(rows);
    for u in 0..v {
        for t in 0..n {
            a[(u, u * n + t)] = 1.0;
        }
        b[u] = w[u];
    }
    for u in 1..v {
        for k in 0..d {
            let r = v + (u - 1) * d + k;
            for t in 0..n {
                a[(r, t)] = h[(t, k)] / w[0];
                a[(r, u * n + t)] = -h[(t, k)] / w[u];
            }
        }
    }
    let base = v + d * (v - 1);
    for t in 0..n {
        for u in 0..v {
            a[(base + t, u * n + t)] = 1.0;
        }
        b[base + t] = 1.0 / n as f64;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = DVector::from_fn(v * n, |_, _| rng.gen::<f64>());
    Ok(LpProblem { a, b, c, v, n })
}

/// LP for `blocks` blocks of `blocksize` positions with a common polynomial
/// trend of the given degree. The balance rows split into per-block marginal
/// rows and trend-moment rows.
pub fn assemble_lp_blocktrend(
    blocks: usize,
    blocksize: usize,
    degree: usize,
    w_star: &TreatmentWeights,
    seed: u64,
) -> Result<(LpProblem, Arc<DesignSpace>)> {
    let space = Arc::new(build_blocktrend(blocks, blocksize, degree)?.space(w_star.len())?);
    let lp = assemble_lp(&space, w_star, seed)?;
    Ok((lp, space))
}

/// Vertex of the LP via the simplex method. The product design `w* ⊗ 1/n`
/// is checked against the constraints first.
pub fn solve_vertex(
    lp: &LpProblem,
    space: Arc<DesignSpace>,
    opts: &SimplexOptions,
) -> Result<VertexSolution> {
    if space.v() != lp.v || space.n() != lp.n {
        return Err(Error::InvalidDesign(
            "LP does not match the design space".into(),
        ));
    }
    let (v, n) = (lp.v, lp.n);
    let w: Vec<f64> = (0..v).map(|u| lp.b[u]).collect();
    let product = Design::with_tolerance(
        space.clone(),
        (0..v)
            .flat_map(|u| (0..n).map(move |t| (u, t)))
            .map(|(u, t)| (u, t, w[u] / n as f64)),
        1e-9,
    )?;
    if lp.residual(&product) > 1e-9 {
        return Err(Error::Infeasible);
    }
    let sol = simplex::solve(&lp.a, &lp.b, &lp.c, opts)?;
    let cells: Vec<_> = sol
        .x
        .iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(j, &x)| {
            let (u, t) = lp.cell(j);
            (u, t, x)
        })
        .collect();
    let design = Design::normalized(space.clone(), cells, 1e-8)?;
    Ok(VertexSolution {
        support_size: design.support_size(),
        basis: sol.basis.iter().map(|&j| lp.cell(j)).collect(),
        objective: sol.objective,
        support_bound: support_bound(&space),
        affine_dimension: space.affine_dimension(RANK_CUTOFF),
        lp_rank: lp.a.nrows() - sol.redundant_rows.len(),
        iterations: sol.iterations,
        design,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrasts::controls_contrasts;
    use crate::criteria::{Criterion, Exponent};
    use crate::linalg::matrix_rank;
    use crate::nuisance::{build_exponential_trend, build_poly_trend};
    use crate::resistance::verify_optimality;
    use crate::tol::Tolerances;
    use crate::weights::{controls_weights, OptimizerOptions};

    #[test]
    fn row_count_and_rank() {
        let space = build_exponential_trend(8).unwrap().space(5).unwrap();
        let w = controls_weights(5, 2, Exponent::Finite(-1.0)).unwrap();
        let lp = assemble_lp(&space, &w, DEFAULT_SEED).unwrap();
        assert_eq!(lp.a.nrows(), 21);
        assert_eq!(lp.a.ncols(), 40);
        let rank = matrix_rank(&lp.a, 1e-10);
        assert!(rank <= support_bound(&space));
        assert_eq!(support_bound(&space), 16);
        assert!(lp.c.iter().all(|&c| c > 0.0 && c < 1.0));
    }

    #[test]
    fn vertex_is_optimal_and_small() {
        let space = Arc::new(build_poly_trend(12, 1).unwrap().space(3).unwrap());
        let q = controls_contrasts(3, 1).unwrap();
        let w = controls_weights(3, 1, Exponent::Finite(-1.0)).unwrap();
        let lp = assemble_lp(&space, &w, 7).unwrap();
        let sol = solve_vertex(&lp, space, &SimplexOptions::default()).unwrap();
        assert!(sol.support_size >= 12 && sol.support_size <= sol.support_bound);
        assert!(lp.residual(&sol.design) < 1e-10);
        let rep = verify_optimality(
            &sol.design,
            &q,
            Criterion::A,
            &Tolerances::table_input(1e-8),
            &OptimizerOptions::default(),
        )
        .unwrap();
        assert!(rep.optimal);
    }

    #[test]
    fn same_seed_same_vertex() {
        let space = Arc::new(build_poly_trend(10, 2).unwrap().space(3).unwrap());
        let w = controls_weights(3, 1, Exponent::Finite(0.0)).unwrap();
        let lp = assemble_lp(&space, &w, 3).unwrap();
        let a = solve_vertex(&lp, space.clone(), &SimplexOptions::default()).unwrap();
        let b = solve_vertex(&lp, space, &SimplexOptions::default()).unwrap();
        assert_eq!(a.basis, b.basis);
        assert_eq!(a.design.to_dense(), b.design.to_dense());
    }
}
