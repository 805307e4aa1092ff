//! Closed-form constants of the drift, Rosenthal, stability and error bounds.
//!
//! Every evaluator is a pure function of its inputs. Quantities that can
//! underflow (the step-size cap `α_{∞,p}` in particular) are carried in log
//! form alongside their plain value.

mod drift;
mod report;
mod td;
mod bounds;

pub use drift::{
    ergodic_scalars, phi, poly_drift_constants, psi, rosenthal_constants, rosenthal_constants_v, sup_power_gap,
    ErgodicScalars, PolyDrift, Rosenthal, RosenthalV,
};
pub use report::ConstantsReport;
pub use td::{td_constants, window_drift, TdConstants, TdConstantsInputs, WindowDrift};
pub use bounds::{
    cbar_a, lsa_constants, stability_constants, LsaConstants, LsaInputs, MatrixData, StabilityConstants, StabilityInputs,
    SeparationConstants,
};

use crate::linalg::LinalgError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstantsError {
    #[error("no small-set constants supplied for radius {radius:.6e}")]
    MissingSmallSet { radius: f64 },
    #[error("geometric ergodicity constants (B_V, rho) are required")]
    MissingErgodicity,
    #[error("parameter out of range: {0}")]
    RangeViolation(String),
    #[error("no feasible beta in (1/(2 tau), 1/tau)")]
    NoFeasibleBeta,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
