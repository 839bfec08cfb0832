//! Problem descriptions in JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contrasts::{self, ContrastSystem};
use crate::criteria::Criterion;
use crate::design::DesignSpace;
use crate::error::{Error, Result};
use crate::exact::CandidateRule;
use crate::io;
use crate::lp::DEFAULT_SEED;
use crate::nuisance::{ModelKind, NuisanceModel};
use crate::tol::Tolerances;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ModelSpec {
    Poly {
        n: usize,
        degree: usize,
    },
    Trig {
        n: usize,
        degree: usize,
    },
    Exp {
        n: usize,
    },
    Block {
        blocks: usize,
    },
    Rowcol {
        rows: usize,
        cols: usize,
    },
    Blocktrend {
        blocks: usize,
        blocksize: usize,
        degree: usize,
    },
    /// CSV with a label column followed by the regressor columns.
    Custom {
        path: PathBuf,
    },
}

impl ModelSpec {
    pub fn build(&self) -> Result<NuisanceModel> {
        let kind = match *self {
            ModelSpec::Poly { n, degree } => ModelKind::Poly { n, degree },
            ModelSpec::Trig { n, degree } => ModelKind::Trig { n, degree },
            ModelSpec::Exp { n } => ModelKind::Exp { n },
            ModelSpec::Block { blocks } => ModelKind::Block { blocks },
            ModelSpec::Rowcol { rows, cols } => ModelKind::RowColumn { rows, cols },
            ModelSpec::Blocktrend {
                blocks,
                blocksize,
                degree,
            } => ModelKind::BlockTrend {
                blocks,
                blocksize,
                degree,
            },
            ModelSpec::Custom { ref path } => {
                let (labels, regressor) = io::read_nuisance_csv(path)?;
                return NuisanceModel::custom(labels, regressor);
            }
        };
        NuisanceModel::build(&kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum ContrastSpec {
    Orthonormal,
    Centered,
    Pairwise,
    Controls {
        g: usize,
    },
    /// CSV with a header of contrast names and one row per treatment.
    Custom {
        path: PathBuf,
    },
}

impl ContrastSpec {
    pub fn build(&self, v: usize) -> Result<ContrastSystem> {
        let q = match self {
            ContrastSpec::Orthonormal => contrasts::orthonormal_contrasts(v)?,
            ContrastSpec::Centered => contrasts::centered_contrasts(v)?,
            ContrastSpec::Pairwise => contrasts::pairwise_contrasts(v)?,
            ContrastSpec::Controls { g } => contrasts::controls_contrasts(v, *g)?,
            ContrastSpec::Custom { path } => ContrastSystem::custom(io::read_contrast_csv(path)?)?,
        };
        if q.v() != v {
            return Err(Error::InvalidContrast(format!(
                "contrast file has {} rows for {v} treatments",
                q.v()
            )));
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub v: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    pub contrast: ContrastSpec,
    pub criterion: Criterion,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub candidates: CandidateRule,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A spec with all referenced files loaded.
#[derive(Debug, Clone)]
pub struct Problem {
    pub spec: ProblemSpec,
    pub q: ContrastSystem,
    pub model: Option<NuisanceModel>,
    pub space: Option<Arc<DesignSpace>>,
}

impl Problem {
    pub fn space(&self) -> Result<Arc<DesignSpace>> {
        self.space
            .clone()
            .ok_or_else(|| Error::InvalidSpace("this command needs a nuisance model".into()))
    }
}

impl ProblemSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn build(&self) -> Result<Problem> {
        let q = self.contrast.build(self.v)?;
        let model = self.model.as_ref().map(ModelSpec::build).transpose()?;
        let space = model
            .as_ref()
            .map(|m| m.space(self.v).map(Arc::new))
            .transpose()?;
        Ok(Problem {
            spec: self.clone(),
            q,
            model,
            space,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let spec = ProblemSpec {
            v: 5,
            model: Some(ModelSpec::Blocktrend {
                blocks: 3,
                blocksize: 8,
                degree: 2,
            }),
            contrast: ContrastSpec::Controls { g: 2 },
            criterion: "p=-2.5".parse().unwrap(),
            seed: 9,
            tolerances: Tolerances::table_input(5e-4),
            candidates: CandidateRule::All,
        };
        let text = spec.to_json().unwrap();
        assert_eq!(ProblemSpec::from_json(&text).unwrap(), spec);
    }

    #[test]
    fn defaults_fill_in() {
        let spec = ProblemSpec::from_json(
            r#"{"v": 4, "contrast": {"kind": "centered"}, "criterion": "E", "model": {"kind": "block", "blocks": 3}}"#,
        )
        .unwrap();
        assert_eq!(spec.seed, DEFAULT_SEED);
        assert_eq!(spec.tolerances, Tolerances::default());
        let p = spec.build().unwrap();
        assert_eq!(p.space().unwrap().n(), 3);
        assert!(ProblemSpec::from_json(r#"{"v": 4}"#).is_err());
    }
}
