//! Exact run orders from small-support approximate designs.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrasts::ContrastSystem;
use crate::criteria::{self, phi_p_positive, Criterion};
use crate::design::{Design, DesignSpace};
use crate::error::{Error, Result};
use crate::linalg::{self, pinv_sym};
use crate::tol::Tolerances;

pub const DEFAULT_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotAnalysis {
    /// Conditions with a single supported treatment, `t → u`.
    pub fixed: BTreeMap<usize, usize>,
    pub free: Vec<usize>,
    /// Supported treatments of each free condition, ascending.
    pub candidates: Vec<Vec<usize>>,
}

/// Splits the conditions of a one-trial-per-condition design into fixed and free ones.
pub fn analyze_slots(xi: &Design) -> Result<SlotAnalysis> {
    analyze_slots_with_tolerance(xi, 1e-6 / xi.space().n() as f64)
}

/// As [`analyze_slots`], allowing each condition weight to be `alpha_tol` away from `1/n`.
pub fn analyze_slots_with_tolerance(xi: &Design, alpha_tol: f64) -> Result<SlotAnalysis> {
    let space = xi.space();
    let n = space.n();
    let mut support = vec![Vec::new(); n];
    for (u, t, _) in xi.cells() {
        support[t].push(u);
    }
    if let Some(t) = support.iter().position(|s| s.is_empty()) {
        return Err(Error::NonUnitColumn(t + 1));
    }
    let alpha = xi.nuisance_marginal();
    let dev = alpha
        .iter()
        .map(|a| (a - 1.0 / n as f64).abs())
        .fold(0.0, f64::max);
    if dev > alpha_tol {
        return Err(Error::NonUniformAlpha(dev));
    }
    let mut fixed = BTreeMap::new();
    let mut free = Vec::new();
    let mut candidates = Vec::new();
    for (t, mut us) in support.into_iter().enumerate() {
        us.sort_unstable();
        match us.len() {
            1 => {
                fixed.insert(t, us[0]);
            }
            _ => {
                free.push(t);
                candidates.push(us);
            }
        }
    }
    Ok(SlotAnalysis {
        fixed,
        free,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateRule {
    /// Treatments supported by the approximate design in that condition.
    #[default]
    Supported,
    All,
}

impl std::str::FromStr for CandidateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supported" => Ok(CandidateRule::Supported),
            "all" => Ok(CandidateRule::All),
            _ => Err(Error::Parse(format!("unknown candidate rule '{s}'"))),
        }
    }
}

/// Criterion values of one-trial-per-condition designs on a fixed space.
/// The nuisance block of the moment matrix is the same for every run order,
/// so its pseudo-inverse is computed once.
pub struct ExactScorer<'a> {
    space: &'a DesignSpace,
    q: &'a ContrastSystem,
    crit: Criterion,
    m22_pinv: DMatrix<f64>,
    tol: Tolerances,
}

impl<'a> ExactScorer<'a> {
    pub fn new(
        space: &'a DesignSpace,
        q: &'a ContrastSystem,
        crit: Criterion,
        tol: &Tolerances,
    ) -> Result<Self> {
        if q.v() != space.v() {
            return Err(Error::InvalidContrast(
                "contrast rows do not match treatments".into(),
            ));
        }
        let h = space.regressor();
        let m22 = linalg::symmetrize(&(h.transpose() * h / space.n() as f64));
        let (m22_pinv, _) = pinv_sym(&m22, tol.rank_cutoff);
        Ok(ExactScorer {
            space,
            q,
            crit,
            m22_pinv,
            tol: *tol,
        })
    }

    /// Criterion value; estimability failures score the worst value.
    pub fn score(&self, order: &[usize]) -> f64 {
        let (v, d) = (self.space.v(), self.space.d());
        let n = self.space.n() as f64;
        let h = self.space.regressor();
        let mut m11 = DMatrix::zeros(v, v);
        let mut m12 = DMatrix::zeros(v, d);
        for (t, &u) in order.iter().enumerate() {
            m11[(u, u)] += 1.0 / n;
            for k in 0..d {
                m12[(u, k)] += h[(t, k)] / n;
            }
        }
        let m_tau = linalg::symmetrize(&(m11 - &m12 * &self.m22_pinv * m12.transpose()));
        let (m_tau_pinv, _) = pinv_sym(&m_tau, self.tol.rank_cutoff);
        let q = self.q.q();
        let residual = q - &m_tau * (&m_tau_pinv * q);
        if linalg::max_abs(&residual) > self.tol.feasibility {
            return self.crit.worst_value();
        }
        let var = linalg::symmetrize(&(q.transpose() * m_tau_pinv * q));
        match self.crit {
            Criterion::Mv => var
                .diagonal()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max),
            Criterion::Phi(p) => {
                let (c, _) = pinv_sym(&var, self.tol.rank_cutoff);
                phi_p_positive(&c, self.q.rank(), p)
            }
        }
    }

    fn better_or_tied(&self, value: f64, best: f64) -> bool {
        let slack = 1e-12 * best.abs();
        if self.crit.minimizes() {
            value <= best + slack
        } else {
            value >= best - slack
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExactDesign {
    pub design: Design,
    /// 0-based treatment per condition.
    pub run_order: Vec<usize>,
    pub value: f64,
    /// Value of the reference approximate design.
    pub reference_value: f64,
    pub efficiency: f64,
    /// Number of completed designs scored.
    pub evaluated: u64,
    pub fixed_slots: usize,
    pub free_slots: usize,
}

impl ExactDesign {
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.design.space().v()];
        for &u in &self.run_order {
            c[u] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumerationOptions {
    pub rule: CandidateRule,
    pub cap: u128,
    /// Cut partial assignments whose treatment counts cannot stay within
    /// `[⌊n w_u⌋, ⌈n w_u⌉]`.
    pub prune: bool,
    pub tol: Tolerances,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        EnumerationOptions {
            rule: CandidateRule::Supported,
            cap: DEFAULT_CAP,
            prune: true,
            tol: Tolerances::default(),
        }
    }
}

struct Bands {
    lo: Vec<usize>,
    hi: Vec<usize>,
}

/// Free-slot assignments in lexicographic order, `base` holding the fixed
/// treatments and `usize::MAX` at free conditions.
fn collect_completions(
    v: usize,
    base: &[usize],
    cands: &[Vec<usize>],
    bands: Option<&Bands>,
) -> Vec<Vec<usize>> {
    let mut counts = vec![0usize; v];
    for &u in base.iter().filter(|&&u| u != usize::MAX) {
        counts[u] += 1;
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(cands.len());
    fn feasible(counts: &[usize], bands: &Bands, remaining: usize) -> bool {
        let mut need = 0;
        for (u, &c) in counts.iter().enumerate() {
            if c > bands.hi[u] {
                return false;
            }
            need += bands.lo[u].saturating_sub(c);
        }
        need <= remaining
    }
    fn dfs(
        depth: usize,
        cands: &[Vec<usize>],
        counts: &mut Vec<usize>,
        current: &mut Vec<usize>,
        bands: Option<&Bands>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if let Some(b) = bands {
            if !feasible(counts, b, cands.len() - depth) {
                return;
            }
        }
        if depth == cands.len() {
            out.push(current.clone());
            return;
        }
        for &u in &cands[depth] {
            counts[u] += 1;
            current.push(u);
            dfs(depth + 1, cands, counts, current, bands, out);
            current.pop();
            counts[u] -= 1;
        }
    }
    dfs(0, cands, &mut counts, &mut current, bands, &mut out);
    out
}

fn select_best<T: Sync>(
    scorer: &ExactScorer<'_>,
    items: &[T],
    order_of: impl Fn(&T) -> Vec<usize> + Sync,
) -> Option<(usize, f64)> {
    let score = |x: &T| scorer.score(&order_of(x));
    let best = if scorer.crit.minimizes() {
        items
            .par_iter()
            .map(score)
            .reduce(|| f64::INFINITY, f64::min)
    } else {
        items
            .par_iter()
            .map(score)
            .reduce(|| f64::NEG_INFINITY, f64::max)
    };
    if best == scorer.crit.worst_value() || !best.is_finite() && !scorer.crit.minimizes() {
        return None;
    }
    let idx = items
        .par_iter()
        .position_first(|x| scorer.better_or_tied(score(x), best))?;
    Some((idx, score(&items[idx])))
}

/// Complete enumeration over the free conditions of an approximate design
/// with one trial per condition; the fixed conditions keep their treatment.
pub fn enumerate_exact(
    xi: &Design,
    q: &ContrastSystem,
    crit: Criterion,
    opts: &EnumerationOptions,
) -> Result<ExactDesign> {
    let space = xi.space_arc().clone();
    let (v, n) = (space.v(), space.n());
    let slots = analyze_slots_with_tolerance(xi, (1e-6 / n as f64).max(opts.tol.weight_sum))?;
    let cands: Vec<Vec<usize>> = match opts.rule {
        CandidateRule::Supported => slots.candidates.clone(),
        CandidateRule::All => slots.free.iter().map(|_| (0..v).collect()).collect(),
    };
    let count = cands
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX);
    if count > opts.cap {
        return Err(Error::EnumerationTooLarge {
            count,
            cap: opts.cap,
        });
    }
    let mut base = vec![usize::MAX; n];
    for (&t, &u) in &slots.fixed {
        base[t] = u;
    }
    let w = xi.treatment_marginal();
    let bands = Bands {
        lo: w
            .iter()
            .map(|x| (n as f64 * x - 1e-9).floor().max(0.0) as usize)
            .collect(),
        hi: w
            .iter()
            .map(|x| (n as f64 * x + 1e-9).ceil() as usize)
            .collect(),
    };
    let mut completions = Vec::new();
    if opts.prune {
        completions = collect_completions(v, &base, &cands, Some(&bands));
    }
    if completions.is_empty() {
        completions = collect_completions(v, &base, &cands, None);
    }
    let scorer = ExactScorer::new(&space, q, crit, &opts.tol)?;
    let fill = |assign: &Vec<usize>| {
        let mut order = base.clone();
        for (&t, &u) in slots.free.iter().zip(assign) {
            order[t] = u;
        }
        order
    };
    let (idx, value) = select_best(&scorer, &completions, fill).ok_or(Error::InfeasibleDesign)?;
    let run_order = fill(&completions[idx]);
    let reference_value = criteria::design_value(xi, q, crit, &opts.tol)?;
    Ok(ExactDesign {
        design: Design::from_run_order(space, &run_order)?,
        efficiency: criteria::efficiency_from_values(value, reference_value, crit),
        run_order,
        value,
        reference_value,
        evaluated: completions.len() as u64,
        fixed_slots: slots.fixed.len(),
        free_slots: slots.free.len(),
    })
}

fn decode(mut index: u64, v: usize, n: usize) -> Vec<usize> {
    let mut order = vec![0; n];
    for t in (0..n).rev() {
        order[t] = (index % v as u64) as usize;
        index /= v as u64;
    }
    order
}

/// Best of all `vⁿ` run orders, lexicographically smallest among ties.
pub fn brute_force_exact(
    space: Arc<DesignSpace>,
    q: &ContrastSystem,
    crit: Criterion,
    cap: u128,
    tol: &Tolerances,
) -> Result<ExactDesign> {
    let (v, n) = (space.v(), space.n());
    let count = (v as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let scorer = ExactScorer::new(&space, q, crit, tol)?;
    let indices: Vec<u64> = (0..count as u64).collect();
    let (idx, value) =
        select_best(&scorer, &indices, |&i| decode(i, v, n)).ok_or(Error::InfeasibleDesign)?;
    let run_order = decode(indices[idx], v, n);
    Ok(ExactDesign {
        design: Design::from_run_order(space, &run_order)?,
        value,
        reference_value: value,
        efficiency: 1.0,
        run_order,
        evaluated: count as u64,
        fixed_slots: 0,
        free_slots: n,
    })
}
