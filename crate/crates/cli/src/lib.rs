//! Experiment runner and inspection commands for `dude-core`.
//!
//! * [`experiment`]: JSON-configured multi-seed training runs that write
//!   `metrics_<seed>.csv` and `summary.json`.
//! * [`compare`]: mean ± std of final loss across seeds, per method.
//! * [`commands`]: gradient checks and SVD inspection of CSV matrices.

pub mod commands;
pub mod compare;
pub mod config;
pub mod error;
pub mod experiment;
pub mod format;

pub use error::{CliError, Result};
