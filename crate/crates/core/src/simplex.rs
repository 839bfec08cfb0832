//! Two-phase revised simplex for `min cᵀx, Ax = b, x ≥ 0` with Bland's rule.
//!
//! The basis inverse is kept dense, updated by pivoting and periodically
//! recomputed from an LU factorization. The result is always a basic
//! feasible solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub max_iter: usize,
    /// Reduced-cost and feasibility tolerance.
    pub tol: f64,
    /// Smallest admissible pivot magnitude.
    pub pivot_tol: f64,
    /// Pivots between refactorizations of the basis.
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            max_iter: 200_000,
            tol: 1e-9,
            pivot_tol: 1e-9,
            refactor_every: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub x: Vec<f64>,
    /// Basic structural columns, in row order of the final basis.
    pub basis: Vec<usize>,
    /// Constraint rows found linearly dependent on the others.
    pub redundant_rows: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
}

struct Tableau<'a> {
    a: &'a DMatrix<f64>,
    b: DVector<f64>,
    m: usize,
    n: usize,
    /// Basic variable per row; indices `≥ n` are artificials.
    basis: Vec<usize>,
    binv: DMatrix<f64>,
    xb: DVector<f64>,
    is_basic: Vec<bool>,
    since_refactor: usize,
    iterations: usize,
    opts: SimplexOptions,
}

enum Step {
    Optimal,
    Pivoted,
}

impl<'a> Tableau<'a> {
    fn column(&self, j: usize) -> DVector<f64> {
        if j < self.n {
            self.a.column(j).clone_owned()
        } else {
            let mut e = DVector::zeros(self.m);
            e[j - self.n] = 1.0;
            e
        }
    }

    fn refactor(&mut self) -> Result<()> {
        let mut bm = DMatrix::zeros(self.m, self.m);
        for (r, &j) in self.basis.iter().enumerate() {
            bm.set_column(r, &self.column(j));
        }
        self.binv = bm.lu().try_inverse().ok_or(Error::NonConvergence {
            iterations: self.iterations,
        })?;
        self.xb = &self.binv * &self.b;
        for x in self.xb.iter_mut() {
            if *x < 0.0 && *x > -self.opts.tol {
                *x = 0.0;
            }
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn pivot(&mut self, row: usize, entering: usize, alpha: &DVector<f64>) -> Result<()> {
        let piv = alpha[row];
        let theta = self.xb[row] / piv;
        for i in 0..self.m {
            if i != row {
                self.xb[i] -= theta * alpha[i];
                if self.xb[i] < 0.0 && self.xb[i] > -self.opts.tol {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[row] = theta;
        let pivot_row = self.binv.row(row).clone_owned() / piv;
        for k in 0..self.m {
            let pk = pivot_row[k];
            if pk == 0.0 {
                continue;
            }
            let mut col = self.binv.column_mut(k);
            for i in 0..self.m {
                if i != row {
                    col[i] -= alpha[i] * pk;
                }
            }
        }
        self.binv.set_row(row, &pivot_row);
        self.is_basic[self.basis[row]] = false;
        self.is_basic[entering] = true;
        self.basis[row] = entering;
        self.iterations += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// One Bland iteration on `cost`; only columns accepted by `allowed` may enter.
    fn step(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<Step> {
        let cb = DVector::from_iterator(self.m, self.basis.iter().map(|&j| cost[j]));
        let y = self.binv.tr_mul(&cb);
        let scale = 1.0 + cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let entering = (0..self.n + self.m).find(|&j| {
            if self.is_basic[j] || !allowed(j) {
                return false;
            }
            let reduced = if j < self.n {
                cost[j] - self.a.column(j).dot(&y)
            } else {
                cost[j] - y[j - self.n]
            };
            reduced < -self.opts.tol * scale
        });
        let Some(entering) = entering else {
            return Ok(Step::Optimal);
        };
        let alpha = &self.binv * self.column(entering);
        let amax = alpha.amax();
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m {
            if alpha[i] > self.opts.pivot_tol * amax.max(1.0) {
                let ratio = self.xb[i].max(0.0) / alpha[i];
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * br.abs().max(1e-12);
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = best else {
            return Err(Error::Unbounded);
        };
        self.pivot(row, entering, &alpha)?;
        Ok(Step::Pivoted)
    }

    fn run(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<()> {
        loop {
            if self.iterations >= self.opts.max_iter {
                return Err(Error::NonConvergence {
                    iterations: self.iterations,
                });
            }
            if let Step::Optimal = self.step(cost, allowed)? {
                return Ok(());
            }
        }
    }
}

/// Solves `min cᵀx` subject to `Ax = b`, `x ≥ 0` and returns a vertex.
pub fn solve(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    opts: &SimplexOptions,
) -> Result<SimplexSolution> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(Error::InvalidDesign("LP dimensions do not agree".into()));
    }
    // Flip rows so that b ≥ 0; artificials then start feasible.
    let mut a_own = a.clone();
    let mut b_own = b.clone();
    for i in 0..m {
        if b_own[i] < 0.0 {
            b_own[i] = -b_own[i];
            a_own.row_mut(i).neg_mut();
        }
    }
    let mut t = Tableau {
        a: &a_own,
        b: b_own.clone(),
        m,
        n,
        basis: (n..n + m).collect(),
        binv: DMatrix::identity(m, m),
        xb: b_own.clone(),
        is_basic: (0..n + m).map(|j| j >= n).collect(),
        since_refactor: 0,
        iterations: 0,
        opts: *opts,
    };

    let phase1: Vec<f64> = (0..n + m).map(|j| if j < n { 0.0 } else { 1.0 }).collect();
    t.run(&phase1, &|_| true)?;
    t.refactor()?;
    let infeas: f64 = t
        .basis
        .iter()
        .zip(t.xb.iter())
        .filter(|(&j, _)| j >= n)
        .map(|(_, x)| x.abs())
        .sum();
    let bscale = 1.0 + b_own.amax();
    if infeas > 1e-7 * bscale {
        return Err(Error::Infeasible);
    }

    // Drive remaining artificials out of the basis with degenerate pivots.
    let mut redundant_rows = Vec::new();
    for row in 0..m {
        if t.basis[row] < n {
            continue;
        }
        let brow = t.binv.row(row).clone_owned();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if t.is_basic[j] {
                continue;
            }
            let v = (&brow * a_own.column(j))[0];
            if v.abs() > 1e-7 && best.is_none_or(|(_, bv)| v.abs() > bv.abs() * 10.0) {
                best = Some((j, v));
            }
        }
        match best {
            Some((j, _)) => {
                let alpha = &t.binv * a_own.column(j);
                t.xb[row] = 0.0;
                t.pivot(row, j, &alpha)?;
            }
            None => redundant_rows.push(row),
        }
    }
    t.refactor()?;

    let mut phase2: Vec<f64> = c.iter().copied().collect();
    phase2.extend(std::iter::repeat_n(0.0, m));
    t.run(&phase2, &|j| j < n)?;
    t.refactor()?;

    let mut x = vec![0.0; n];
    let mut basis = Vec::new();
    for (r, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = if t.xb[r] < opts.tol * bscale {
                0.0
            } else {
                t.xb[r]
            };
            basis.push(j);
        }
    }
    let objective = x.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
    // Report redundancy in the caller's row numbering (rows were not permuted).
    redundant_rows.retain(|&r| t.basis[r] >= n);
    let redundant_rows = redundant_rows.iter().map(|&r| t.basis[r] - n).collect();
    Ok(SimplexSolution {
        x,
        basis,
        redundant_rows,
        objective,
        iterations: t.iterations,
    })
}
