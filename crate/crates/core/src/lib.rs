//! Dose-response estimation for continuous exposures with the generalized
//! propensity score.
//!
//! The crate covers the whole path from data to inference:
//!
//! - [`gps`]: normal-linear propensity model and stabilized weights with
//!   their analytic gradient;
//! - [`drf`]: naive, weighted and stratified estimators of a linear
//!   dose-response function;
//! - [`variance`]: model-based, sandwich, linearized, pooled and bootstrap
//!   variance estimators;
//! - [`simulation`]: the confounded data-generating process and the
//!   Monte-Carlo harness computing bias, RMSE, variability ratio and coverage;
//! - [`report`]: result tables and their CSV / JSON serialization.

pub mod dataset;
pub mod drf;
pub mod error;
pub mod gps;
pub mod numkit;
#[cfg(test)]
#[path = "../tests/common/oracle.rs"]
#[allow(dead_code)]
mod oracle;
mod par;
pub mod report;
pub mod seed;
pub mod simulation;
pub mod variance;

pub use dataset::{load_csv, ColumnSpec, Dataset};
pub use error::{Error, Result};
