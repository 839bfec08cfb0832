//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::contrasts::ContrastKind;
use crate::criteria::{self, Criterion, Exponent};
use crate::error::{Error, Result};
use crate::exact::{self, CandidateRule, EnumerationOptions};
use crate::io;
use crate::lp;
use crate::nuisance::ModelKind;
use crate::resistance::verify_against;
use crate::simplex::SimplexOptions;
use crate::spec::{ContrastSpec, ModelSpec, Problem, ProblemSpec};
use crate::tol::Tolerances;
use crate::weights::{gamma_p, optimize_weights, OptimizedWeights, OptimizerOptions};

#[derive(Debug, Parser)]
#[command(
    name = "optdesign",
    version,
    about = "Optimal designs for treatment contrasts under nuisance effects"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimal treatment proportions.
    Weights(ProblemArgs),
    /// Small-support optimal design and an exact run order derived from it.
    Construct {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Balance, resistance and optimality of a design file.
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        design: PathBuf,
    },
    /// Efficiency of a design file against the optimal proportions.
    Efficiency {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        design: PathBuf,
    },
    /// Exact run order by enumeration: over the free conditions of an
    /// approximate design if one is given, otherwise over all run orders.
    Enumerate {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Poly,
    Trig,
    Exp,
    Block,
    Rowcol,
    Blocktrend,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContrastArg {
    Orthonormal,
    Centered,
    Pairwise,
    Controls,
    Custom,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    /// JSON problem file; other flags override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of controls.
    #[arg(long)]
    pub g: Option<usize>,
    /// Defaults to controls when --g is given, centered otherwise.
    #[arg(long, value_enum)]
    pub contrast: Option<ContrastArg>,
    #[arg(long)]
    pub contrast_file: Option<PathBuf>,
    /// D, A, E, MV or p=<exponent>.
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub blocksize: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub nuisance_file: Option<PathBuf>,
    #[arg(long, env = "OPTDESIGN_SEED")]
    pub seed: Option<u64>,
    /// Tolerance for designs read from rounded tables.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum)]
    pub candidates: Option<CandidateArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CandidateArg {
    Supported,
    All,
}

fn need(x: Option<usize>, flag: &str, model: &str) -> Result<usize> {
    x.ok_or_else(|| Error::InvalidSpace(format!("--{flag} is required for --model {model}")))
}

impl ProblemArgs {
    pub fn to_spec(&self) -> Result<ProblemSpec> {
        let base = self.spec.as_deref().map(ProblemSpec::read).transpose()?;
        let v = self
            .v
            .or(base.as_ref().map(|s| s.v))
            .ok_or_else(|| Error::InvalidSpace("--v is required".into()))?;
        let contrast = match (self.contrast, self.g) {
            (Some(ContrastArg::Orthonormal), _) => ContrastSpec::Orthonormal,
            (Some(ContrastArg::Centered), _) => ContrastSpec::Centered,
            (Some(ContrastArg::Pairwise), _) => ContrastSpec::Pairwise,
            (Some(ContrastArg::Controls), Some(g)) | (None, Some(g)) => {
                ContrastSpec::Controls { g }
            }
            (Some(ContrastArg::Controls), None) => {
                return Err(Error::InvalidContrast(
                    "--g is required for --contrast controls".into(),
                ))
            }
            (Some(ContrastArg::Custom), _) => ContrastSpec::Custom {
                path: self
                    .contrast_file
                    .clone()
                    .ok_or_else(|| Error::InvalidContrast("--contrast-file is required".into()))?,
            },
            (None, None) => base
                .as_ref()
                .map(|s| s.contrast.clone())
                .unwrap_or(ContrastSpec::Centered),
        };
        let criterion: Criterion = match &self.criterion {
            Some(c) => c.parse()?,
            None => base.as_ref().map(|s| s.criterion).unwrap_or(Criterion::A),
        };
        let model = match self.model {
            None => base.as_ref().and_then(|s| s.model.clone()),
            Some(m) => Some(self.model_spec(m)?),
        };
        let tolerances = match self.tol {
            Some(t) if t > 0.0 && t.is_finite() => Tolerances::table_input(t),
            Some(t) => return Err(Error::Parse(format!("--tol {t} must be positive"))),
            None => base.as_ref().map(|s| s.tolerances).unwrap_or_default(),
        };
        let candidates = match self.candidates {
            Some(CandidateArg::Supported) => CandidateRule::Supported,
            Some(CandidateArg::All) => CandidateRule::All,
            None => base.as_ref().map(|s| s.candidates).unwrap_or_default(),
        };
        Ok(ProblemSpec {
            v,
            model,
            contrast,
            criterion,
            seed: self
                .seed
                .or(base.as_ref().map(|s| s.seed))
                .unwrap_or(lp::DEFAULT_SEED),
            tolerances,
            candidates,
        })
    }

    fn model_spec(&self, m: ModelArg) -> Result<ModelSpec> {
        Ok(match m {
            ModelArg::Poly => ModelSpec::Poly {
                n: need(self.n, "n", "poly")?,
                degree: self.degree.unwrap_or(1),
            },
            ModelArg::Trig => ModelSpec::Trig {
                n: need(self.n, "n", "trig")?,
                degree: self.degree.unwrap_or(1),
            },
            ModelArg::Exp => ModelSpec::Exp {
                n: need(self.n, "n", "exp")?,
            },
            ModelArg::Block => ModelSpec::Block {
                blocks: need(self.blocks, "blocks", "block")?,
            },
            ModelArg::Rowcol => ModelSpec::Rowcol {
                rows: need(self.rows, "rows", "rowcol")?,
                cols: need(self.cols, "cols", "rowcol")?,
            },
            ModelArg::Blocktrend => ModelSpec::Blocktrend {
                blocks: need(self.blocks, "blocks", "blocktrend")?,
                blocksize: need(self.blocksize, "blocksize", "blocktrend")?,
                degree: self.degree.unwrap_or(1),
            },
            ModelArg::Custom => ModelSpec::Custom {
                path: self
                    .nuisance_file
                    .clone()
                    .ok_or_else(|| Error::InvalidSpace("--nuisance-file is required".into()))?,
            },
        })
    }

    pub fn problem(&self) -> Result<Problem> {
        self.to_spec()?.build()
    }
}

/// Runs a command and returns what it prints on stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Weights(p) => cmd_weights(&p.problem()?),
        Command::Construct { problem, out_dir } => cmd_construct(&problem.problem()?, out_dir),
        Command::Verify { problem, design } => cmd_verify(&problem.problem()?, design),
        Command::Efficiency { problem, design } => cmd_efficiency(&problem.problem()?, design),
        Command::Enumerate {
            problem,
            design,
            out_dir,
        } => cmd_enumerate(&problem.problem()?, design.as_deref(), out_dir.as_deref()),
    }
}

/// Exit status for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn optimal(p: &Problem) -> Result<OptimizedWeights> {
    optimize_weights(&p.q, p.spec.criterion, &OptimizerOptions::default())?.into_result()
}

fn fmt_vec(x: &[f64]) -> String {
    x.iter()
        .map(|w| format!("{w:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn json<T: Serialize>(x: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(x)? + "\n")
}

pub fn cmd_weights(p: &Problem) -> Result<String> {
    let opt = optimal(p)?;
    let crit = p.spec.criterion;
    let mut out = format!("criterion: {crit}\n");
    if let ContrastKind::Controls { g } = p.q.kind() {
        let exponent = match crit {
            Criterion::Phi(e) => e,
            Criterion::Mv => Exponent::Finite(-1.0),
        };
        out += &format!("gamma: {:.6}\n", gamma_p(p.spec.v, g, exponent)?.gamma);
    }
    out += &format!("weights: {}\n", fmt_vec(opt.weights.as_slice()));
    out += &format!("value: {:.6}\n", opt.value);
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct ConstructReport {
    pub criterion: Criterion,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub support_size: usize,
    pub support_bound: usize,
    pub lp_rank: usize,
    pub optimal: bool,
    pub approximate_value: f64,
    pub fixed_slots: usize,
    pub free_slots: usize,
    /// Exact design value; absent when enumeration was skipped.
    pub criterion_value: Option<f64>,
    pub efficiency: Option<f64>,
    pub exact_sequence: Option<String>,
    pub counts: Option<Vec<usize>>,
}

fn model_kind(p: &Problem) -> ModelKind {
    p.model
        .as_ref()
        .map(|m| m.kind.clone())
        .unwrap_or(ModelKind::Custom)
}

pub fn cmd_construct(p: &Problem, out_dir: &Path) -> Result<String> {
    let space = p.space()?;
    let crit = p.spec.criterion;
    let opt = optimal(p)?;
    let problem = lp::assemble_lp(&space, &opt.weights, p.spec.seed)?;
    let vertex = lp::solve_vertex(&problem, space.clone(), &SimplexOptions::default())?;
    let check = verify_against(
        &vertex.design,
        &p.q,
        crit,
        &opt.weights,
        opt.value,
        &Tolerances::table_input(1e-8),
    )?;
    let slots = exact::analyze_slots(&vertex.design)?;
    let opts = EnumerationOptions {
        rule: p.spec.candidates,
        tol: p.spec.tolerances,
        ..Default::default()
    };
    let exact = match exact::enumerate_exact(&vertex.design, &p.q, crit, &opts) {
        Ok(e) => Some(e),
        Err(e @ Error::EnumerationTooLarge { .. }) => {
            eprintln!("warning: {e}; no exact design written");
            None
        }
        Err(e) => return Err(e),
    };
    fs::create_dir_all(out_dir)?;
    io::write_dense_csv(
        fs::File::create(out_dir.join("design.csv"))?,
        &vertex.design,
    )?;
    io::write_sparse_csv(
        fs::File::create(out_dir.join("design_sparse.csv"))?,
        &vertex.design,
    )?;
    let sequence = exact
        .as_ref()
        .map(|e| io::format_run_order(&e.run_order, space.v(), &model_kind(p)));
    if let Some(s) = &sequence {
        fs::write(out_dir.join("exact.txt"), s)?;
    }
    let report = ConstructReport {
        criterion: crit,
        seed: p.spec.seed,
        weights: opt.weights.as_slice().to_vec(),
        support_size: vertex.support_size,
        support_bound: vertex.support_bound,
        lp_rank: vertex.lp_rank,
        optimal: check.optimal,
        approximate_value: check.criterion_value,
        fixed_slots: slots.fixed.len(),
        free_slots: slots.free.len(),
        criterion_value: exact.as_ref().map(|e| e.value),
        efficiency: exact.as_ref().map(|e| e.efficiency),
        exact_sequence: sequence.map(|s| s.trim_end().to_string()),
        counts: exact.as_ref().map(|e| e.counts()),
    };
    let text = json(&report)?;
    fs::write(out_dir.join("report.json"), &text)?;
    Ok(text)
}

pub fn cmd_verify(p: &Problem, design: &Path) -> Result<String> {
    let space = p.space()?;
    let tol = p.spec.tolerances;
    let xi = io::read_design_file(design, space, tol.weight_sum.max(1e-12))?;
    let opt = optimal(p)?;
    json(&verify_against(
        &xi,
        &p.q,
        p.spec.criterion,
        &opt.weights,
        opt.value,
        &tol,
    )?)
}

#[derive(Debug, Serialize)]
struct EfficiencyReport {
    criterion: Criterion,
    criterion_value: f64,
    optimal_value: f64,
    efficiency: f64,
}

pub fn cmd_efficiency(p: &Problem, design: &Path) -> Result<String> {
    let space = p.space()?;
    let tol = p.spec.tolerances;
    let xi = io::read_design_file(design, space, tol.weight_sum.max(1e-12))?;
    let opt = optimal(p)?;
    let value = criteria::design_value(&xi, &p.q, p.spec.criterion, &tol)?;
    json(&EfficiencyReport {
        criterion: p.spec.criterion,
        criterion_value: value,
        optimal_value: opt.value,
        efficiency: criteria::efficiency_from_values(value, opt.value, p.spec.criterion),
    })
}

#[derive(Debug, Serialize)]
struct EnumerationReport {
    run_order: String,
    counts: Vec<usize>,
    criterion_value: f64,
    efficiency: f64,
    evaluated: u64,
    fixed_slots: usize,
    free_slots: usize,
}

pub fn cmd_enumerate(p: &Problem, design: Option<&Path>, out_dir: Option<&Path>) -> Result<String> {
    let space = p.space()?;
    let tol = p.spec.tolerances;
    let crit = p.spec.criterion;
    let result = match design {
        Some(path) => {
            let xi = io::read_design_file(path, space.clone(), tol.weight_sum.max(1e-12))?;
            let opts = EnumerationOptions {
                rule: p.spec.candidates,
                tol,
                ..Default::default()
            };
            exact::enumerate_exact(&xi, &p.q, crit, &opts)?
        }
        None => {
            let mut best =
                exact::brute_force_exact(space.clone(), &p.q, crit, exact::DEFAULT_CAP, &tol)?;
            let opt = optimal(p)?;
            best.reference_value = opt.value;
            best.efficiency = criteria::efficiency_from_values(best.value, opt.value, crit);
            best
        }
    };
    let sequence = io::format_run_order(&result.run_order, space.v(), &model_kind(p));
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("exact.txt"), &sequence)?;
    }
    json(&EnumerationReport {
        run_order: sequence.trim_end().to_string(),
        counts: result.counts(),
        criterion_value: result.value,
        efficiency: result.efficiency,
        evaluated: result.evaluated,
        fixed_slots: result.fixed_slots,
        free_slots: result.free_slots,
    })
}
