//! Experiment phases (baseline, redaction, sanitization) and parameter sweeps.

mod chart;
mod config;
mod grid;
mod output;
mod run;

pub use chart::{render_chart, SweptVariable};
pub use config::{cell_seed, BackendPair, BackendSpec, ConfigError, Design, ExperimentConfig, GridSpec};
pub use grid::{run_grid, CellFailure, CellOutput, GridOutcome};
pub use output::{render_table, summary_csv, write_results, Format, SummaryRow, WriteOptions, SUMMARY_COLUMNS};
pub use run::{feasible_eval_size, run_experiment, run_experiment_with, Backends, ExperimentError, ExperimentOutput};
