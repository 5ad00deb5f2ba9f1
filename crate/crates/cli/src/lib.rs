//! Config-driven experiments on top of the `mfgda` library.

pub mod build;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
