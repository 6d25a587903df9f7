//! Config-driven experiment runner over `fragwave-core`.
//!
//! A run reads one JSON [`config::RunConfig`], executes each experiment on a
//! fixed-size worker pool, evaluates the declared tolerance checks and emits
//! CSV tables plus a JSON report.

pub mod config;
pub mod emit;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, Kind, RunConfig};
pub use report::{RunReport, Status};
pub use runner::{run, RunOptions};
