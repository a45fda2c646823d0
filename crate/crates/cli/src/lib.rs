//! Configuration, orchestration and file I/O for the `degenlab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod field;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
