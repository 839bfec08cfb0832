//! Design spaces, designs and the matrix functionals of a design.
//!
//! A design is a probability distribution on the grid `{1..v} × T`. The
//! regression vector at `(u, t)` is `(e_uᵀ, h(t)ᵀ)ᵀ`, so the moment matrix
//! splits into a diagonal treatment block, a cross block and a nuisance
//! block. Everything downstream (information, C-matrices, feasibility)
//! is computed from those blocks.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::contrasts::ContrastSystem;
use crate::error::{Error, Result};
use crate::linalg::{self, pinv_sym};
use crate::tol::Tolerances;

/// The grid of treatments and nuisance conditions with the regressor `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    v: usize,
    conditions: Vec<String>,
    /// `n × d`, row `t` is `h(t)ᵀ`.
    regressor: DMatrix<f64>,
}

impl DesignSpace {
    pub fn new(v: usize, conditions: Vec<String>, regressor: DMatrix<f64>) -> Result<Self> {
        if v < 2 {
            return Err(Error::InvalidSpace(format!(
                "need at least 2 treatments, got {v}"
            )));
        }
        if conditions.is_empty() {
            return Err(Error::InvalidSpace("no nuisance conditions".into()));
        }
        if regressor.nrows() != conditions.len() {
            return Err(Error::InvalidSpace(format!(
                "{} conditions but {} regressor rows",
                conditions.len(),
                regressor.nrows()
            )));
        }
        if regressor.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpace("non-finite regressor value".into()));
        }
        Ok(DesignSpace {
            v,
            conditions,
            regressor,
        })
    }

    /// Conditions labelled `1..=n` with the given regressor rows.
    pub fn with_numbered_conditions(v: usize, regressor: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=regressor.nrows()).map(|t| t.to_string()).collect();
        Self::new(v, labels, regressor)
    }

    /// The nuisance-free model on `n` conditions.
    pub fn marginal(v: usize, n: usize) -> Result<Self> {
        Self::with_numbered_conditions(v, DMatrix::zeros(n, 0))
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn n(&self) -> usize {
        self.conditions.len()
    }

    pub fn d(&self) -> usize {
        self.regressor.ncols()
    }

    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    pub fn regressor(&self) -> &DMatrix<f64> {
        &self.regressor
    }

    pub fn h(&self, t: usize) -> DVector<f64> {
        self.regressor.row(t).transpose()
    }

    /// Same grid with `h̃ = R h`.
    pub fn reparametrized(&self, r: &DMatrix<f64>) -> Result<Self> {
        if r.shape() != (self.d(), self.d()) {
            return Err(Error::InvalidSpace(
                "reparametrization has wrong shape".into(),
            ));
        }
        Self::new(
            self.v,
            self.conditions.clone(),
            &self.regressor * r.transpose(),
        )
    }

    /// Affine dimension of `{h(t)}`: rank of `[h(2) − h(1), …, h(n) − h(1)]`.
    pub fn affine_dimension(&self, cutoff: f64) -> usize {
        let n = self.n();
        if n < 2 || self.d() == 0 {
            return 0;
        }
        let first = self.regressor.row(0).clone_owned();
        let diffs = DMatrix::from_fn(n - 1, self.d(), |i, k| {
            self.regressor[(i + 1, k)] - first[k]
        });
        linalg::matrix_rank(&diffs, cutoff)
    }
}

fn check_probability(w: &[f64], tol: f64, what: &str) -> Result<()> {
    if let Some(i) = w.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidWeights(format!(
            "{what} entry {} is negative",
            i + 1
        )));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidWeights(format!(
            "{what} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

/// Treatment proportions `w` of the nuisance-free model.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentWeights(Vec<f64>);

impl TreatmentWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(w, Tolerances::default().weight_sum)
    }

    pub fn with_tolerance(w: Vec<f64>, tol: f64) -> Result<Self> {
        if w.len() < 2 {
            return Err(Error::InvalidWeights("need at least 2 treatments".into()));
        }
        check_probability(&w, tol, "treatment weight")?;
        Ok(TreatmentWeights(w))
    }

    pub fn uniform(v: usize) -> Self {
        TreatmentWeights(vec![1.0 / v as f64; v])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Index of the first zero entry, if any.
    pub fn first_zero(&self) -> Option<usize> {
        self.0.iter().position(|&x| x <= 0.0)
    }

    pub fn max_abs_diff(&self, other: &TreatmentWeights) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
    }
}

/// Nuisance-conditions design `α`.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceWeights(Vec<f64>);

impl NuisanceWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidWeights("no nuisance conditions".into()));
        }
        check_probability(&alpha, Tolerances::default().weight_sum, "nuisance weight")?;
        Ok(NuisanceWeights(alpha))
    }

    pub fn uniform(n: usize) -> Self {
        NuisanceWeights(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// An approximate design: sparse nonnegative weights on the grid.
#[derive(Debug, Clone)]
pub struct Design {
    space: Arc<DesignSpace>,
    weights: BTreeMap<(usize, usize), f64>,
}

impl Design {
    /// Builds a design from `(u, t, weight)` cells; total weight must be one
    /// within `Tolerances::weight_sum`. Zero cells are dropped and repeated
    /// cells are summed.
    pub fn new(
        space: Arc<DesignSpace>,
        cells: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        Self::with_tolerance(space, cells, Tolerances::default().weight_sum)
    }

    pub fn with_tolerance(
        space: Arc<DesignSpace>,
        cells: impl IntoIterator<Item = (usize, usize, f64)>,
        sum_tol: f64,
    ) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for (u, t, x) in cells {
            if u >= space.v() || t >= space.n() {
                return Err(Error::InvalidDesign(format!(
                    "cell ({}, {}) outside the {}×{} grid",
                    u + 1,
                    t + 1,
                    space.v(),
                    space.n()
                )));
            }
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidDesign(format!(
                    "negative weight {x} at ({}, {})",
                    u + 1,
                    t + 1
                )));
            }
            if x > 0.0 {
                *weights.entry((u, t)).or_insert(0.0) += x;
            }
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > sum_tol {
            return Err(Error::InvalidDesign(format!(
                "total weight {total} is not 1"
            )));
        }
        Ok(Design { space, weights })
    }

    /// Accepts totals within `sum_tol` of one and rescales to sum exactly one.
    pub fn normalized(
        space: Arc<DesignSpace>,
        cells: impl IntoIterator<Item = (usize, usize, f64)>,
        sum_tol: f64,
    ) -> Result<Self> {
        let mut d = Self::with_tolerance(space, cells, sum_tol)?;
        let total: f64 = d.weights.values().sum();
        for x in d.weights.values_mut() {
            *x /= total;
        }
        Ok(d)
    }

    /// From a dense `v × n` weight matrix.
    pub fn from_dense(space: Arc<DesignSpace>, m: &DMatrix<f64>) -> Result<Self> {
        if m.shape() != (space.v(), space.n()) {
            return Err(Error::InvalidDesign(format!(
                "weight matrix is {}×{}, expected {}×{}",
                m.nrows(),
                m.ncols(),
                space.v(),
                space.n()
            )));
        }
        let cells: Vec<_> = (0..m.nrows())
            .flat_map(|u| (0..m.ncols()).map(move |t| (u, t)))
            .map(|(u, t)| (u, t, m[(u, t)]))
            .collect();
        Self::new(space, cells)
    }

    /// Exact design with one trial in every condition; `order[t]` is the
    /// 0-based treatment used in condition `t`.
    pub fn from_run_order(space: Arc<DesignSpace>, order: &[usize]) -> Result<Self> {
        if order.len() != space.n() {
            return Err(Error::InvalidDesign(format!(
                "run order has {} entries for {} conditions",
                order.len(),
                space.n()
            )));
        }
        let w = 1.0 / order.len() as f64;
        let cells: Vec<_> = order.iter().enumerate().map(|(t, &u)| (u, t, w)).collect();
        Self::new(space, cells)
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn space_arc(&self) -> &Arc<DesignSpace> {
        &self.space
    }

    pub fn weight(&self, u: usize, t: usize) -> f64 {
        self.weights.get(&(u, t)).copied().unwrap_or(0.0)
    }

    /// Support cells in `(u, t)` order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.weights.iter().map(|(&(u, t), &x)| (u, t, x))
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.space.v(), self.space.n());
        for (u, t, x) in self.cells() {
            m[(u, t)] = x;
        }
        m
    }

    pub fn treatment_marginal(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.space.v()];
        for (u, _, x) in self.cells() {
            w[u] += x;
        }
        w
    }

    pub fn treatment_weights(&self) -> TreatmentWeights {
        TreatmentWeights(self.treatment_marginal())
    }

    pub fn nuisance_marginal(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.space.n()];
        for (_, t, x) in self.cells() {
            a[t] += x;
        }
        a
    }

    pub fn nuisance_weights(&self) -> NuisanceWeights {
        NuisanceWeights(self.nuisance_marginal())
    }

    /// True when every weight is a multiple of `1/size` (within `tol`).
    pub fn is_exact(&self, size: usize, tol: f64) -> bool {
        let n = size as f64;
        self.cells()
            .all(|(_, _, x)| ((x * n) - (x * n).round()).abs() <= tol)
    }

    /// The run order if the design puts exactly one trial in each condition.
    pub fn run_order(&self) -> Option<Vec<usize>> {
        let n = self.space.n();
        let unit = 1.0 / n as f64;
        let mut order = vec![usize::MAX; n];
        for (u, t, x) in self.cells() {
            if (x - unit).abs() > 1e-9 || order[t] != usize::MAX {
                return None;
            }
            order[t] = u;
        }
        order.iter().all(|&u| u != usize::MAX).then_some(order)
    }
}

/// The blocks of the moment matrix `M(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentBlocks {
    pub m11: DMatrix<f64>,
    pub m12: DMatrix<f64>,
    pub m22: DMatrix<f64>,
}

impl MomentBlocks {
    pub fn full(&self) -> DMatrix<f64> {
        let v = self.m11.nrows();
        let d = self.m22.nrows();
        let mut m = DMatrix::zeros(v + d, v + d);
        m.view_mut((0, 0), (v, v)).copy_from(&self.m11);
        m.view_mut((0, v), (v, d)).copy_from(&self.m12);
        m.view_mut((v, 0), (d, v)).copy_from(&self.m12.transpose());
        m.view_mut((v, v), (d, d)).copy_from(&self.m22);
        m
    }
}

pub fn moment_blocks(xi: &Design) -> MomentBlocks {
    let space = xi.space();
    let (v, d) = (space.v(), space.d());
    let mut m11 = DMatrix::zeros(v, v);
    let mut m12 = DMatrix::zeros(v, d);
    let mut m22 = DMatrix::zeros(d, d);
    let h = space.regressor();
    for (u, t, x) in xi.cells() {
        m11[(u, u)] += x;
        for k in 0..d {
            m12[(u, k)] += x * h[(t, k)];
        }
    }
    for (t, a) in xi.nuisance_marginal().into_iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for i in 0..d {
            for j in 0..d {
                m22[(i, j)] += a * h[(t, i)] * h[(t, j)];
            }
        }
    }
    MomentBlocks { m11, m12, m22 }
}

/// `M_τ = M₁₁ − M₁₂ M₂₂⁺ M₁₂ᵀ`.
pub fn schur_complement(blocks: &MomentBlocks, cutoff: f64) -> DMatrix<f64> {
    if blocks.m22.nrows() == 0 {
        return blocks.m11.clone();
    }
    let (m22_pinv, _) = pinv_sym(&blocks.m22, cutoff);
    linalg::symmetrize(&(&blocks.m11 - &blocks.m12 * m22_pinv * blocks.m12.transpose()))
}

/// `C_K(ξ) = (Qᵀ M_τ⁺ Q)⁺` with its rank.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub c: DMatrix<f64>,
    pub rank: usize,
}

/// `‖(I − M M⁺) K‖_max ≤ tol.feasibility`.
pub fn is_feasible(xi: &Design, q: &ContrastSystem, tol: &Tolerances) -> bool {
    if q.v() != xi.space().v() {
        return false;
    }
    let m = moment_blocks(xi).full();
    let (m_pinv, _) = pinv_sym(&m, tol.rank_cutoff);
    let k = q.k_matrix(xi.space().d());
    let residual = &k - &m * (&m_pinv * &k);
    linalg::max_abs(&residual) <= tol.feasibility
}

/// `Qᵀ M_τ⁺ Q`, the variance matrix of the contrast estimators (up to σ²/N).
pub fn variance_matrix(xi: &Design, q: &ContrastSystem, tol: &Tolerances) -> Result<DMatrix<f64>> {
    if !is_feasible(xi, q, tol) {
        return Err(Error::InfeasibleDesign);
    }
    let m_tau = schur_complement(&moment_blocks(xi), tol.rank_cutoff);
    let (m_tau_pinv, _) = pinv_sym(&m_tau, tol.rank_cutoff);
    Ok(linalg::symmetrize(
        &(q.q().transpose() * m_tau_pinv * q.q()),
    ))
}

pub fn c_matrix(xi: &Design, q: &ContrastSystem, tol: &Tolerances) -> Result<CMatrix> {
    let var = variance_matrix(xi, q, tol)?;
    let (c, rank) = pinv_sym(&var, tol.rank_cutoff);
    Ok(CMatrix { c, rank })
}

/// `Qᵀ diag(w⁻¹) Q` for strictly positive treatment weights.
pub fn weights_variance(w: &TreatmentWeights, q: &ContrastSystem) -> Result<DMatrix<f64>> {
    if w.len() != q.v() {
        return Err(Error::InvalidWeights(format!(
            "{} weights for {} treatments",
            w.len(),
            q.v()
        )));
    }
    if let Some(u) = w.first_zero() {
        return Err(Error::SingularWeights(u + 1));
    }
    let inv = DVector::from_iterator(w.len(), w.as_slice().iter().map(|x| 1.0 / x));
    let scaled = DMatrix::from_fn(q.v(), q.s(), |i, j| q.q()[(i, j)] * inv[i]);
    Ok(linalg::symmetrize(&(q.q().transpose() * scaled)))
}

/// C-matrix of the nuisance-free model, `(Qᵀ diag(w⁻¹) Q)⁺`.
pub fn weights_c_matrix(w: &TreatmentWeights, q: &ContrastSystem, cutoff: f64) -> Result<CMatrix> {
    let (c, rank) = pinv_sym(&weights_variance(w, q)?, cutoff);
    Ok(CMatrix { c, rank })
}

/// `‖M(ξ) diag(w⁻¹, 0) K − K‖_max ≤ tol.certificate`.
pub fn certificate_holds(
    xi: &Design,
    w: &TreatmentWeights,
    q: &ContrastSystem,
    tol: &Tolerances,
) -> Result<bool> {
    let v = xi.space().v();
    if w.len() != v || q.v() != v {
        return Err(Error::InvalidWeights("dimension mismatch".into()));
    }
    if let Some(u) = w.first_zero() {
        return Err(Error::SingularWeights(u + 1));
    }
    let d = xi.space().d();
    let m = moment_blocks(xi).full();
    let mut g = DMatrix::zeros(v + d, v + d);
    for (u, &wu) in w.as_slice().iter().enumerate() {
        g[(u, u)] = 1.0 / wu;
    }
    let k = q.k_matrix(d);
    let residual = &m * (&g * &k) - &k;
    Ok(linalg::max_abs(&residual) <= tol.certificate)
}
