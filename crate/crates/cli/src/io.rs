//! Dataset and result file formats.
//!
//! Series files are CSV in one of two layouts:
//! - wide: a single numeric column with header `value`, one series per file;
//! - long: columns `series_id,t,value`, any number of series per file,
//!   rows sorted by `t` within each series.
//!
//! Fit results and evaluation reports are JSON with a `schema_version`
//! field. Floats are written with Rust's shortest round-trip formatting so
//! that save/load is lossless.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use arlag::ar::StabilityReport;
use arlag::design::MultiSeriesDataset;
use arlag::pipeline::{FitResult, LambdaProvenance, ResolvedMode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("series {id} is empty")]
    EmptySeries { id: String },
    #[error("dataset: {0}")]
    Dataset(#[from] arlag::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Loads one or more series files (wide or long, detected per file by
/// header) into a dataset. Wide files are labeled by file stem.
pub fn load_dataset(paths: &[impl AsRef<Path>]) -> Result<MultiSeriesDataset> {
    let mut series = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        let path = p.as_ref();
        let file = BufReader::new(open(path)?);
        let mut lines = file.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            Some((_, Err(e))) => return Err(e.into()),
            None => return Err(parse_err(path, 1, "empty file")),
        };
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        match cols.as_slice() {
            ["value"] => {
                let mut values = Vec::new();
                for (i, line) in lines {
                    let line = line?;
                    let t = line.trim();
                    if t.is_empty() {
                        continue;
                    }
                    let v: f64 = t.parse().map_err(|_| {
                        parse_err(path, i + 1, format!("not a number: {t:?}"))
                    })?;
                    values.push(v);
                }
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                if values.is_empty() {
                    return Err(IoError::EmptySeries { id });
                }
                labels.push(id);
                series.push(values);
            }
            ["series_id", "t", "value"] => {
                // BTreeMap keeps the output ordering stable by id
                let mut by_id: BTreeMap<String, (Vec<f64>, i64)> = BTreeMap::new();
                for (i, line) in lines {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
                    if fields.len() != 3 {
                        return Err(parse_err(
                            path,
                            i + 1,
                            format!("expected 3 fields, got {}", fields.len()),
                        ));
                    }
                    let t: i64 = fields[1].parse().map_err(|_| {
                        parse_err(path, i + 1, format!("bad time index: {:?}", fields[1]))
                    })?;
                    let v: f64 = fields[2].parse().map_err(|_| {
                        parse_err(path, i + 1, format!("not a number: {:?}", fields[2]))
                    })?;
                    let entry = by_id
                        .entry(fields[0].to_string())
                        .or_insert_with(|| (Vec::new(), i64::MIN));
                    if t <= entry.1 {
                        return Err(parse_err(
                            path,
                            i + 1,
                            format!("time index {t} not increasing within series {}", fields[0]),
                        ));
                    }
                    entry.1 = t;
                    entry.0.push(v);
                }
                if by_id.is_empty() {
                    return Err(parse_err(path, 1, "no data rows"));
                }
                for (id, (values, _)) in by_id {
                    if values.is_empty() {
                        return Err(IoError::EmptySeries { id });
                    }
                    labels.push(id);
                    series.push(values);
                }
            }
            other => {
                return Err(parse_err(
                    path,
                    1,
                    format!("unrecognized header {other:?}; expected `value` or `series_id,t,value`"),
                ))
            }
        }
    }
    Ok(MultiSeriesDataset::new(series, labels)?)
}

/// Writes one series in wide format.
pub fn save_series_wide(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut out = create(path.as_ref())?;
    writeln!(out, "value")?;
    for v in values {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

/// Writes several series in long format.
pub fn save_series_long(
    path: impl AsRef<Path>,
    labels: &[String],
    series: &[Vec<f64>],
) -> Result<()> {
    let mut out = create(path.as_ref())?;
    writeln!(out, "series_id,t,value")?;
    for (label, values) in labels.iter().zip(series) {
        for (t, v) in values.iter().enumerate() {
            writeln!(out, "{label},{},{v}", t + 1)?;
        }
    }
    Ok(())
}

/// Trace summary kept in serialized fit results (the full per-iteration
/// objective trace stays in memory only).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub iters_used: usize,
    pub converged: bool,
    pub fixed_point_residual: f64,
    pub objective_final: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultFile {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub beta_hat: Vec<f64>,
    pub l_input: usize,
    pub lambda_used: f64,
    pub lambda_provenance: LambdaProvenance,
    pub l0_hat: usize,
    pub beta_tilde: Vec<Vec<f64>>,
    pub mode: ResolvedMode,
    pub stability: Vec<StabilityReport>,
    pub trace: TraceSummary,
}

impl FitResultFile {
    pub fn from_fit(fit: &FitResult, labels: &[String]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            labels: labels.to_vec(),
            beta_hat: fit.beta_hat.as_slice().to_vec(),
            l_input: fit.l_input,
            lambda_used: fit.lambda_used,
            lambda_provenance: fit.lambda_provenance.clone(),
            l0_hat: fit.l0_hat,
            beta_tilde: fit.beta_tilde.clone(),
            mode: fit.mode,
            stability: fit.stability.clone(),
            trace: TraceSummary {
                iters_used: fit.trace.iters_used,
                converged: fit.trace.converged,
                fixed_point_residual: fit.trace.fixed_point_residual,
                objective_final: fit.trace.objective_per_iter.last().copied(),
            },
        }
    }
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut out = create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(open(path.as_ref())?))?)
}

/// True generating coefficients for evaluation: either one vector shared by
/// all series or one vector per series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthFile {
    #[serde(default)]
    pub shared_coeffs: Option<Vec<f64>>,
    #[serde(default)]
    pub series_coeffs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl TruthFile {
    pub fn per_series(&self, m: usize) -> anyhow::Result<Vec<Vec<f64>>> {
        match (&self.shared_coeffs, &self.series_coeffs) {
            (Some(c), None) => Ok(vec![c.clone(); m]),
            (None, Some(cs)) => {
                anyhow::ensure!(cs.len() == m, "truth has {} series, data has {m}", cs.len());
                Ok(cs.clone())
            }
            _ => anyhow::bail!("truth file needs exactly one of shared_coeffs or series_coeffs"),
        }
    }
}
