//! Experiment harness around `wmlab`: configuration, corpus generation,
//! attack execution, detection and report emission.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod scheme;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use report::RunReport;
