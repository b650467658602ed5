//! Experiment runner for the owlab laboratory: keyed-text configuration,
//! dispatch to the numerical experiments, CSV output.

pub mod config;
pub mod experiments;
pub mod output;

pub use config::{Config, ConfigError};
pub use experiments::{compute, run_experiment, ExperimentConfig, Report, RunError, DEFAULT_SEED, EXPERIMENTS};
pub use output::{emit_csv, format_num, Cell, OutputError};
