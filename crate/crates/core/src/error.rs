use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid design space: {0}")]
    InvalidSpace(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid contrast system: {0}")]
    InvalidContrast(String),
    #[error("control count g = {g} must satisfy 0 < g < v/2 (v = {v})")]
    InvalidControlCount { v: usize, g: usize },
    #[error("criterion exponent p = {0} must satisfy p <= 0")]
    InvalidP(f64),
    #[error("unsupported criterion: {0}")]
    UnsupportedCriterion(String),
    #[error("design is not feasible for the contrast system")]
    InfeasibleDesign,
    #[error("treatment {0} has zero total weight")]
    ZeroTreatmentWeight(usize),
    #[error("weights contain a zero entry at treatment {0}")]
    SingularWeights(usize),
    #[error("nuisance marginal is not uniform (max deviation {0:.3e})")]
    NonUniformAlpha(f64),
    #[error("degree {degree} too high for {n} conditions")]
    DegreeTooHigh { n: usize, degree: usize },
    #[error("condition {0} carries no weight")]
    NonUnitColumn(usize),
    #[error("enumeration of {count} completions exceeds the cap of {cap}; use the supported-treatments rule")]
    EnumerationTooLarge { count: u128, cap: u128 },
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors raised by numerical routines rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Infeasible
                | Error::Unbounded
                | Error::NonConvergence { .. }
                | Error::InfeasibleDesign
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
