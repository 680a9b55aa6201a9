//! Experiment harness for the `adp-sched` scheduling simulator: TOML
//! manifests, runs and parameter sweeps, and their CSV outputs.

pub mod config;
pub mod error;
pub mod harness;

pub use config::{ConfigFile, Experiment, LambdaMode, Method};
pub use error::{CliError, CliResult};
