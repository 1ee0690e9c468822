//! Sweep harness, its configuration format and the command line.

pub mod cli;
pub mod config;
pub mod sweep;

pub use config::{DataSource, ExperimentConfig};
pub use sweep::{emit_plots_data, run_sweep, run_sweep_on, ConfigResult, SweepResult};
