//! Experiment harness for `ordergap`: TOML configs, seeded parallel runs,
//! CSV traces, JSON reports and the acceptance suite.

pub mod config;
pub mod experiment;
pub mod report;
pub mod trace;
pub mod verify;

pub use config::{load_config, ConfigError, ExperimentConfig, LoadedConfig};
pub use experiment::{analyze, run_experiment, stop_bounds, Artifacts, ExperimentOutput, RunError};
