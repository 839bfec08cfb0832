//! Approximate and exact optimal designs for treatment contrasts in the
//! presence of nuisance effects.

pub mod cli;
pub mod contrasts;
pub mod criteria;
pub mod design;
pub mod error;
pub mod exact;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod nuisance;
pub mod resistance;
pub mod simplex;
pub mod spec;
pub mod tol;
pub mod weights;

pub use nalgebra;

pub use contrasts::{ContrastKind, ContrastSystem};
pub use criteria::{Criterion, Exponent};
pub use design::{Design, DesignSpace, NuisanceWeights, TreatmentWeights};
pub use error::{Error, Result};
pub use nuisance::{ModelKind, NuisanceModel};
pub use tol::Tolerances;
