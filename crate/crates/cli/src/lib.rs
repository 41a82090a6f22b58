//! Experiment harness for the aucrac simulator: config loading, multi-seed
//! sweeps written as CSV, and plot-ready data files.

pub mod error;
pub mod experiment;
pub mod plots;

pub use error::{exit, CliError};
pub use experiment::{load_config, run_experiment, ExperimentOutput, ExperimentSpec, ResultRow, Sweep, SweepVar};
pub use plots::{emit_plot_data, Figure};
