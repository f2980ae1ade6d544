use std::collections::HashMap;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BackendPair, ExperimentConfig, GridSpec};
use super::run::{run_experiment_with, Backends, ExperimentOutput};
use crate::corpus::Corpus;
use crate::metrics::MetricsReport;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: usize,
    pub config: ExperimentConfig,
    pub error: String,
    /// True when a backend (not the config or corpus) caused the failure.
    pub backend: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOutput {
    pub cell: usize,
    pub output: ExperimentOutput,
}

/// Every cell of a sweep ends up in exactly one of the two lists.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct GridOutcome {
    pub completed: Vec<CellOutput>,
    pub failures: Vec<CellFailure>,
}

impl GridOutcome {
    pub fn reports(&self) -> impl Iterator<Item = &MetricsReport> {
        self.completed.iter().map(|c| &c.output.report)
    }
}

/// Cell index, its config, and the output or (error, caused by a backend).
type CellResult = (usize, ExperimentConfig, Result<ExperimentOutput, (String, bool)>);

/// Runs every cell of the grid, concurrently, keeping results in cell order.
/// A failing cell is recorded and the rest proceed.
pub fn run_grid(corpus: &Corpus, grid: &GridSpec) -> GridOutcome {
    let cells = grid.cells();
    let timeout = Duration::from_secs(grid.timeout_secs);
    let backends: HashMap<&BackendPair, Result<Backends, String>> = grid
        .backends
        .iter()
        .map(|pair| {
            let b = Backends::from_specs(&pair.answerer, &pair.embedder, corpus, grid.dim, timeout)
                .map_err(|e| format!("backend setup failed: {e}"));
            (pair, b)
        })
        .collect();

    let results: Vec<CellResult> = cells
        .into_par_iter()
        .enumerate()
        .map(|(cell, config)| {
            let pair = BackendPair {
                answerer: config.answerer.clone(),
                embedder: config.embedder.clone(),
            };
            let result = match &backends[&pair] {
                Err(e) => Err((e.clone(), true)),
                Ok(b) => run_experiment_with(corpus, &config, b).map_err(|e| (e.to_string(), e.is_backend())),
            };
            (cell, config, result)
        })
        .collect();

    let mut outcome = GridOutcome::default();
    for (cell, config, result) in results {
        match result {
            Ok(output) => outcome.completed.push(CellOutput { cell, output }),
            Err((error, backend)) => {
                tracing::warn!(cell, %error, "grid cell failed");
                outcome.failures.push(CellFailure { cell, config, error, backend });
            }
        }
    }
    outcome
}
