//! Batch experiment runner: reads a TOML experiment description, runs it
//! against `dioph-core` and writes reproducible JSON and CSV reports.

pub mod config;
pub mod report;
pub mod run;

pub use config::{ConfigError, ExperimentConfig, Kind};
pub use report::{to_json, write_report, Format, WriteError};
pub use run::{cert_json, run, Report, RunError};
