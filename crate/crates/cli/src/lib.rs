//! Config-driven experiments on top of `precs-core`: simulation snapshots,
//! oracle verification, outcome sampling and parameter sweeps.

pub mod commands;
pub mod config;
pub mod error;
pub mod verify;

pub use commands::{run_sample, run_simulate, run_sweep, run_verify, Context, Overrides};
pub use config::ExperimentConfig;
pub use error::CliError;
