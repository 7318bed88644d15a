//! JSON run configuration. Field names mirror the structures they feed.

use std::path::PathBuf;

use arlag::pipeline::{Mode, TheoryConstants};
use arlag::solver::SolverConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

/// How a cell chooses its tuning parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum LambdaSpec {
    /// Blocked cross-validation (practical mode).
    #[default]
    CrossValidated,
    /// The closed-form theory formula.
    Theory,
    /// A fixed value.
    Fixed { value: f64 },
    /// Theory-shaped `prefactor * sqrt(L log(ML/delta) / (D M))`.
    Prefactor { value: f64 },
}

/// One experiment grid cell: a generating process and panel geometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentCell {
    /// Number of series in the panel.
    pub m: usize,
    /// Shared true coefficients (the true lag is their length).
    pub coeffs: Vec<f64>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Post-sample length per series (`n = t + lag bound`).
    pub t: usize,
    /// Explicit lag bound; otherwise selected from the data.
    #[serde(default)]
    pub lag_bound: Option<usize>,
    #[serde(default)]
    pub lambda: LambdaSpec,
    /// Holdout length for the one-step prediction error.
    #[serde(default = "default_holdout")]
    pub holdout: usize,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_holdout() -> usize {
    500
}

/// Top-level run configuration (`experiment --config`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub input_paths: Vec<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub constants: TheoryConstants,
    pub solver: SolverConfig,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    /// Explicit cross-validation grid; otherwise the automatic log grid.
    pub lambda_grid: Option<Vec<f64>>,
    pub format: ReportFormat,
    pub cells: Vec<ExperimentCell>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: "experiment".into(),
            input_paths: Vec::new(),
            output_path: None,
            constants: TheoryConstants::default(),
            solver: SolverConfig::default(),
            mode: Mode::Auto,
            seeds: Vec::new(),
            lambda_grid: None,
            format: ReportFormat::Csv,
            cells: Vec::new(),
        }
    }
}
