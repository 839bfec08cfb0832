#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use optdesign::contrasts::{self, ContrastSystem};
use optdesign::design::{c_matrix, Design, DesignSpace};
use optdesign::nuisance::{self, NuisanceModel};
use optdesign::resistance::{is_balanced, is_resistant};
use optdesign::Tolerances;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A generalized inverse of a symmetric PSD matrix: a column-pivoted QR picks
/// a maximal independent index set `J` and `G[J,J] = M[J,J]⁻¹`. Schur
/// complements, range tests and projectors built from moment matrices do not
/// depend on which generalized inverse is used, and this route shares nothing
/// with the library's eigen-based pseudo-inverse.
pub fn g_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut g = DMatrix::zeros(n, n);
    if n == 0 || m.amax() == 0.0 {
        return g;
    }
    let qr = m.clone().col_piv_qr();
    let r = qr.r();
    let top = r[(0, 0)].abs();
    let rank = (0..n)
        .take_while(|&i| r[(i, i)].abs() > 1e-10 * top)
        .count();
    let mut perm = DMatrix::<f64>::identity(n, n);
    qr.p().permute_columns(&mut perm);
    let idx: Vec<usize> = (0..rank).map(|k| perm.column(k).iamax()).collect();
    let sub = DMatrix::from_fn(rank, rank, |i, j| m[(idx[i], idx[j])]);
    let inv = sub.try_inverse().expect("pivoted block is singular");
    for (i, &a) in idx.iter().enumerate() {
        for (j, &b) in idx.iter().enumerate() {
            g[(a, b)] = inv[(i, j)];
        }
    }
    g
}

pub fn random_model(r: &mut ChaCha8Rng) -> NuisanceModel {
    match r.gen_range(0..6) {
        0 => {
            let degree = r.gen_range(0..3);
            nuisance::build_poly_trend(r.gen_range(degree + 2..11), degree).unwrap()
        }
        1 => {
            let degree = r.gen_range(1..3);
            nuisance::build_trig_trend(r.gen_range(2 * degree + 2..12), degree).unwrap()
        }
        2 => nuisance::build_exponential_trend(r.gen_range(3..9)).unwrap(),
        3 => nuisance::build_block(r.gen_range(2..6)).unwrap(),
        4 => nuisance::build_rowcolumn(r.gen_range(2..4), r.gen_range(2..5)).unwrap(),
        _ => nuisance::build_blocktrend(r.gen_range(2..4), r.gen_range(3..6), r.gen_range(0..2))
            .unwrap(),
    }
}

pub fn random_space(r: &mut ChaCha8Rng, v: usize) -> Arc<DesignSpace> {
    Arc::new(random_model(r).space(v).unwrap())
}

/// Contrast matrices of full column rank.
pub fn random_full_rank_q(r: &mut ChaCha8Rng, v: usize) -> ContrastSystem {
    match r.gen_range(0..3) {
        0 => contrasts::orthonormal_contrasts(v).unwrap(),
        1 if v >= 3 => contrasts::controls_contrasts(v, 1).unwrap(),
        _ => {
            let s = r.gen_range(1..v);
            let mut q = DMatrix::from_fn(v, s, |_, _| r.gen_range(-1.0..1.0));
            for mut c in q.column_iter_mut() {
                let mean = c.mean();
                c.add_scalar_mut(-mean);
            }
            ContrastSystem::custom(q).unwrap()
        }
    }
}

/// Contrast systems of rank `v − 1`.
pub fn random_rank_deficient_free_q(r: &mut ChaCha8Rng, v: usize) -> ContrastSystem {
    match r.gen_range(0..4) {
        0 => contrasts::orthonormal_contrasts(v).unwrap(),
        1 => contrasts::centered_contrasts(v).unwrap(),
        2 => contrasts::pairwise_contrasts(v).unwrap(),
        _ if v >= 3 => contrasts::controls_contrasts(v, r.gen_range(1..v.div_ceil(2))).unwrap(),
        _ => contrasts::centered_contrasts(v).unwrap(),
    }
}

fn random_simplex(r: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let x: Vec<f64> = (0..k).map(|_| r.gen_range(0.2..1.0)).collect();
    let s: f64 = x.iter().sum();
    x.into_iter().map(|a| a / s).collect()
}

/// Random design with every treatment present.
pub fn random_design(r: &mut ChaCha8Rng, space: &Arc<DesignSpace>, density: f64) -> Design {
    let (v, n) = (space.v(), space.n());
    let mut m = DMatrix::zeros(v, n);
    for u in 0..v {
        for t in 0..n {
            if r.gen_bool(density) {
                m[(u, t)] = r.gen_range(0.0..1.0);
            }
        }
        let t = r.gen_range(0..n);
        m[(u, t)] += r.gen_range(0.1..1.0);
    }
    let total = m.sum();
    Design::from_dense(space.clone(), &(m / total)).unwrap()
}

/// Rows of `[1, h]` as columns of a basis matrix; returns the projector onto
/// the orthogonal complement of their span in `Rⁿ`.
fn moment_null_projector(space: &DesignSpace) -> DMatrix<f64> {
    let n = space.n();
    let mut b = DMatrix::zeros(n, space.d() + 1);
    b.column_mut(0).fill(1.0);
    b.view_mut((0, 1), (n, space.d()))
        .copy_from(space.regressor());
    DMatrix::identity(n, n) - &b * g_inverse(&(b.transpose() * &b)) * b.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturb {
    /// No zeroth or `h` moment: the barycentre stays at the product's.
    Keep,
    /// One common zero-sum direction for every `Shared` treatment.
    Shared,
    /// An independent zero-sum direction.
    Free,
}

/// `w ⊗ α` plus a per-treatment perturbation chosen by `modes`.
pub fn perturbed_product(
    r: &mut ChaCha8Rng,
    space: &Arc<DesignSpace>,
    modes: &[Perturb],
) -> (Design, Vec<f64>, Vec<f64>) {
    let (v, n) = (space.v(), space.n());
    let w = random_simplex(r, v);
    let alpha = random_simplex(r, n);
    let p = moment_null_projector(space);
    let zero_sum = |r: &mut ChaCha8Rng| {
        let z = DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0));
        let mean = z.mean();
        z.add_scalar(-mean)
    };
    let shared = zero_sum(r);
    let mut delta = DMatrix::zeros(v, n);
    for u in 0..v {
        let d = match modes[u] {
            Perturb::Keep => &p * DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0)),
            Perturb::Shared => shared.clone(),
            Perturb::Free => zero_sum(r),
        };
        delta.set_row(u, &(d.transpose() * w[u]));
    }
    let base = DMatrix::from_fn(v, n, |u, t| w[u] * alpha[t]);
    let scale = delta.amax();
    let eps = if scale > 1e-12 {
        0.5 * base.min() / scale
    } else {
        0.0
    };
    let m = base + delta * eps;
    let total = m.sum();
    (
        Design::from_dense(space.clone(), &(m / total)).unwrap(),
        w,
        alpha,
    )
}

pub fn spread_of_barycentres(xi: &Design) -> f64 {
    let space = xi.space();
    let w = xi.treatment_marginal();
    let mut s = DMatrix::zeros(space.d(), space.v());
    for (u, t, x) in xi.cells() {
        for k in 0..space.d() {
            s[(k, u)] += x * space.regressor()[(t, k)] / w[u];
        }
    }
    let mut out: f64 = 0.0;
    for u in 1..space.v() {
        out = out.max((s.column(u) - s.column(0)).amax());
    }
    out
}

/// Nuisance information loss never helps: `N_K(ξ) ≼ N_Q(w)`.
pub fn check_loewner(seed: u64) -> Check {
    let mut r = rng(seed);
    let v = r.gen_range(2..7);
    let space = random_space(&mut r, v);
    let q = random_full_rank_q(&mut r, v);
    let xi = random_design(&mut r, &space, 0.8);
    let w = xi.treatment_marginal();
    let (m11, m12, m22) = {
        let b = optdesign::design::moment_blocks(&xi);
        (b.m11, b.m12, b.m22)
    };
    let m_tau = &m11 - &m12 * g_inverse(&m22) * m12.transpose();
    let m_tau_g = g_inverse(&m_tau);
    let estimable = (q.q() - &m_tau * &m_tau_g * q.q()).amax() <= 1e-8;
    let n_w = (q.q().transpose()
        * DMatrix::from_diagonal(&DVector::from_iterator(v, w.iter().map(|x| 1.0 / x)))
        * q.q())
    .try_inverse()
    .ok_or("singular N_Q(w)")?;
    let lib = c_matrix(&xi, &q, &Tolerances::default());
    if !estimable {
        return match lib {
            Err(_) => Ok(()),
            Ok(_) => Err(format!(
                "seed {seed}: library says feasible, oracle does not"
            )),
        };
    }
    let n_xi = (q.q().transpose() * &m_tau_g * q.q())
        .try_inverse()
        .ok_or("singular variance")?;
    let diff = &n_w - &n_xi;
    let sym = (&diff + diff.transpose()) * 0.5;
    let lmin = sym.symmetric_eigenvalues().min();
    let scale = 1.0 + n_w.amax();
    if lmin < -1e-9 * scale {
        return Err(format!("seed {seed}: λ_min(N_Q(w) − N_K(ξ)) = {lmin:e}"));
    }
    let lib = lib.map_err(|e| format!("seed {seed}: {e}"))?;
    if (&lib.c - &n_xi).amax() > 1e-7 * (1.0 + n_xi.amax()) {
        return Err(format!("seed {seed}: library C-matrix differs from oracle"));
    }
    Ok(())
}

/// Balanced ⇒ resistant for every Q; resistant ⇔ balanced when rank Q = v − 1.
pub fn check_balance_resistance(seed: u64) -> Check {
    let mut r = rng(seed);
    let v = r.gen_range(4..8);
    let space = random_space(&mut r, v);
    let modes: Vec<Perturb> = match r.gen_range(0..3) {
        0 => vec![Perturb::Keep; v],
        1 => vec![Perturb::Free; v],
        _ => (0..v)
            .map(|u| {
                if u < 2 {
                    Perturb::Keep
                } else {
                    Perturb::Shared
                }
            })
            .collect(),
    };
    let (xi, _, _) = perturbed_product(&mut r, &space, &modes);
    let bal = is_balanced(&xi, 1e-9).map_err(|e| e.to_string())?;
    let oracle = spread_of_barycentres(&xi) <= 1e-9;
    if bal.is_balanced != oracle {
        return Err(format!("seed {seed}: balance flag disagrees with oracle"));
    }
    let full = random_rank_deficient_free_q(&mut r, v);
    // τ₁ − τ₂ together with comparisons among treatments 3..v: rank v − 2.
    let pair = {
        let mut q = DMatrix::zeros(v, v - 2);
        q[(0, 0)] = 1.0;
        q[(1, 0)] = -1.0;
        for j in 3..v {
            q[(2, j - 2)] = -1.0;
            q[(j, j - 2)] = 1.0;
        }
        ContrastSystem::custom(q).unwrap()
    };
    for q in [&full, &pair] {
        let res = is_resistant(&xi, q, 1e-9).map_err(|e| e.to_string())?;
        if bal.is_balanced && !res.is_resistant {
            return Err(format!("seed {seed}: balanced but not resistant"));
        }
    }
    let res = is_resistant(&xi, &full, 1e-9).map_err(|e| e.to_string())?;
    if res.is_resistant != bal.is_balanced {
        return Err(format!(
            "seed {seed}: rank v−1 resistance differs from balance"
        ));
    }
    // Treatments 1, 2 share one barycentre and 3..v another: resistant for the
    // rank v − 2 system although the design is not balanced.
    if modes[2] == Perturb::Shared {
        let res = is_resistant(&xi, &pair, 1e-9).map_err(|e| e.to_string())?;
        if !res.is_resistant {
            return Err(format!("seed {seed}: pair contrast should be resisted"));
        }
    }
    Ok(())
}

/// Block model: balanced designs are product designs.
pub fn check_block_product(seed: u64) -> Check {
    let mut r = rng(seed);
    let v = r.gen_range(2..6);
    let b = r.gen_range(2..7);
    let space = Arc::new(nuisance::build_block(b).unwrap().space(v).unwrap());
    let xi = if r.gen_bool(0.5) {
        perturbed_product(&mut r, &space, &vec![Perturb::Keep; v]).0
    } else {
        random_design(&mut r, &space, 0.7)
    };
    let bal = is_balanced(&xi, 1e-9).map_err(|e| e.to_string())?;
    let w = xi.treatment_marginal();
    let alpha = xi.nuisance_marginal();
    let gap = (0..v)
        .flat_map(|u| (0..b).map(move |t| (u, t)))
        .map(|(u, t)| (xi.weight(u, t) - w[u] * alpha[t]).abs())
        .fold(0.0, f64::max);
    if bal.max_residual <= 1e-9 && gap > 1e-8 {
        return Err(format!(
            "seed {seed}: balanced block design is {gap:e} from product"
        ));
    }
    Ok(())
}

/// Row-column model: balanced ⇔ each treatment's normalized slice has the
/// same row and column marginals.
pub fn check_rowcol_marginals(seed: u64) -> Check {
    let mut r = rng(seed);
    let v = r.gen_range(2..5);
    let (rows, cols) = (r.gen_range(2..5), r.gen_range(2..5));
    let space = Arc::new(
        nuisance::build_rowcolumn(rows, cols)
            .unwrap()
            .space(v)
            .unwrap(),
    );
    let w = random_simplex(&mut r, v);
    let rm = random_simplex(&mut r, rows);
    let cm = random_simplex(&mut r, cols);
    let same = r.gen_bool(0.5);
    let mut m = DMatrix::zeros(v, rows * cols);
    for u in 0..v {
        let mut delta = DMatrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0));
        let row_means = delta.column_mean();
        for mut c in delta.column_iter_mut() {
            c -= &row_means;
        }
        let col_means = delta.row_mean();
        for mut rr in delta.row_iter_mut() {
            rr -= &col_means;
        }
        if !same && u == v - 1 {
            delta = DMatrix::from_fn(rows, cols, |_, _| r.gen_range(-1.0..1.0));
            let mean = delta.mean();
            delta.add_scalar_mut(-mean);
        }
        let base = DMatrix::from_fn(rows, cols, |k, l| rm[k] * cm[l]);
        let eps = 0.5 * base.min() / delta.amax();
        let slice = base + delta * eps;
        for k in 0..rows {
            for l in 0..cols {
                m[(u, k * cols + l)] = w[u] * slice[(k, l)];
            }
        }
    }
    let total = m.sum();
    let xi = Design::from_dense(space, &(m / total)).map_err(|e| e.to_string())?;
    let marg = |u: usize| {
        let wu: f64 = (0..rows * cols).map(|t| xi.weight(u, t)).sum();
        let rr: Vec<f64> = (0..rows)
            .map(|k| (0..cols).map(|l| xi.weight(u, k * cols + l)).sum::<f64>() / wu)
            .collect();
        let cc: Vec<f64> = (0..cols)
            .map(|l| (0..rows).map(|k| xi.weight(u, k * cols + l)).sum::<f64>() / wu)
            .collect();
        (rr, cc)
    };
    let (r0, c0) = marg(0);
    let oracle = (1..v).all(|u| {
        let (ru, cu) = marg(u);
        ru.iter()
            .zip(&r0)
            .chain(cu.iter().zip(&c0))
            .all(|(a, b)| (a - b).abs() <= 1e-9)
    });
    let bal = is_balanced(&xi, 1e-9).map_err(|e| e.to_string())?;
    if bal.is_balanced != oracle {
        return Err(format!(
            "seed {seed}: balance {} vs marginal oracle {oracle}",
            bal.is_balanced
        ));
    }
    if oracle != same {
        return Err(format!(
            "seed {seed}: generator produced unexpected marginals"
        ));
    }
    Ok(())
}

/// `h ↦ Rh` changes neither the predicates nor the C-matrix.
pub fn check_reparametrization(seed: u64) -> Check {
    let mut r = rng(seed);
    let v = r.gen_range(2..6);
    let space = random_space(&mut r, v);
    let mode = if r.gen_bool(0.5) {
        Perturb::Keep
    } else {
        Perturb::Free
    };
    let (xi, _, _) = perturbed_product(&mut r, &space, &vec![mode; v]);
    let d = space.d();
    let rmat = DMatrix::from_fn(d, d, |i, j| {
        r.gen_range(-1.0..1.0) + if i == j { d as f64 } else { 0.0 }
    });
    let space2 = Arc::new(space.reparametrized(&rmat).map_err(|e| e.to_string())?);
    let xi2 = Design::new(space2, xi.cells()).map_err(|e| e.to_string())?;
    let q = random_rank_deficient_free_q(&mut r, v);
    let a = is_resistant(&xi, &q, 1e-9).map_err(|e| e.to_string())?;
    let b = is_resistant(&xi2, &q, 1e-9).map_err(|e| e.to_string())?;
    if a.is_balanced != b.is_balanced || a.is_resistant != b.is_resistant {
        return Err(format!(
            "seed {seed}: predicates changed under reparametrization"
        ));
    }
    let tol = Tolerances::default();
    match (c_matrix(&xi, &q, &tol), c_matrix(&xi2, &q, &tol)) {
        (Ok(c1), Ok(c2)) => {
            if (&c1.c - &c2.c).amax() > 1e-8 * (1.0 + c1.c.amax()) {
                return Err(format!(
                    "seed {seed}: C-matrix changed under reparametrization"
                ));
            }
        }
        (Err(_), Err(_)) => {}
        _ => {
            return Err(format!(
                "seed {seed}: feasibility changed under reparametrization"
            ))
        }
    }
    Ok(())
}

fn frequency_space(v: usize, n: usize, a: usize) -> Arc<DesignSpace> {
    let phi = 2.0 * PI / n as f64;
    let h = DMatrix::from_fn(n, 3, |t, c| {
        let x = a as f64 * phi * (t + 1) as f64;
        match c {
            0 => 1.0,
            1 => x.cos(),
            _ => x.sin(),
        }
    });
    Arc::new(DesignSpace::with_numbered_conditions(v, h).unwrap())
}

/// Replicating a run order `m` times balances every frequency that is not a
/// multiple of `m`; multiples of `m` inherit the imbalance of the base order.
pub fn check_replication_sharpness(seed: u64) -> Check {
    let mut r = rng(seed);
    let v = 3;
    let l = r.gen_range(4..8);
    let m = r.gen_range(2..5);
    let mut base: Vec<usize> = (0..l).map(|i| i % v).collect();
    base.shuffle(&mut r);
    let order = nuisance::replicate_run_order(&base, m);
    let n = l * m;
    for a in 1..=3 * m {
        let space = frequency_space(v, n, a);
        let xi = Design::from_run_order(space, &order).map_err(|e| e.to_string())?;
        let bal = is_balanced(&xi, 1e-10).map_err(|e| e.to_string())?;
        if a % m != 0 {
            if !bal.is_balanced {
                return Err(format!(
                    "seed {seed}: a={a}, m={m} residual {:e}",
                    bal.max_residual
                ));
            }
        } else if (a / m) % l != 0 {
            let base_space = frequency_space(v, l, a / m);
            let xp = Design::from_run_order(base_space, &base).map_err(|e| e.to_string())?;
            if spread_of_barycentres(&xp) > 1e-6 && bal.is_balanced {
                return Err(format!(
                    "seed {seed}: a={a} multiple of m={m} unexpectedly balanced"
                ));
            }
        }
    }
    Ok(())
}

pub fn run_cases(count: u64, offset: u64, check: fn(u64) -> Check) -> Check {
    let failures: Vec<String> = (0..count).filter_map(|i| check(offset + i).err()).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(format!(
            "{} of {count} failed; first: {}",
            failures.len(),
            failures[0]
        ))
    }
}
