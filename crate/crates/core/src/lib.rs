//! Local average treatment effect estimation for experiments that use
//! covariate-adaptive randomization and suffer from imperfect compliance.
//!
//! The crate is organised bottom-up:
//!
//! * [`data`] holds the observed sample and the per-stratum bookkeeping.
//! * [`randomization`] draws assignments under SRS, WEI, BCD and SBR.
//! * [`numerics`] contains the regression solvers (OLS, logistic MLE,
//!   lasso with data-driven loadings) and basis builders.
//! * [`adjustments`] fits working models per (arm, stratum) cell.
//! * [`estimators`] turns a fitted surface into a doubly robust LATE
//!   estimate with its variance, and also provides TSLS and the S estimator.
//! * [`simulation`] generates the benchmark designs and runs Monte Carlo
//!   size/power studies.

pub mod adjustments;
pub mod data;
pub mod error;
pub mod estimators;
pub mod method;
pub mod numerics;
pub mod randomization;
pub mod simulation;

pub use data::{ExperimentData, StrataIndex};
pub use error::{Error, Result};
pub use adjustments::{AdjustmentSurface, RegressorSpec};
pub use estimators::{LateEstimate, SEstimate, TslsEstimate, WaldTest};
pub use method::Method;
pub use simulation::{DgpId, DgpSpec, McConfig, SimulationReport};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
