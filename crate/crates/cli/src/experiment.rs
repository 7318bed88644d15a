//! Monte Carlo experiment harness: simulate, fit, and evaluate over a grid
//! of cells and replicate seeds, then emit a CSV or JSON report.
//!
//! Rows are computed in a rayon work pool and assembled in (cell, seed)
//! order, so a rerun with the same configuration is byte-identical apart
//! from the runtime_ms column.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use arlag::ar::{simulate_ar, ARProcessSpec};
use arlag::design::{build_design, MultiSeriesDataset};
use arlag::diagnostics::{
    effective_noise_surrogate, empirical_re_ratio, estimation_error, false_discoveries,
    one_step_prediction_mse, pad_per_series, re_sparsity_level, GuaranteeReport,
};
use arlag::pipeline::{
    run_pipeline, select_lag_bound, CvConfig, LambdaRule, PipelineSettings,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentCell, LambdaSpec, ReportFormat, RunConfig};
use crate::io::SCHEMA_VERSION;

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub cell: usize,
    pub seed: u64,
    pub m: usize,
    pub l0: usize,
    pub d: Option<usize>,
    pub lambda: Option<f64>,
    pub l0_hat: Option<usize>,
    pub est_error: Option<f64>,
    pub false_discoveries: Option<usize>,
    pub stability: Option<f64>,
    pub prediction_mse: Option<f64>,
    pub runtime_ms: u128,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub n_rows: usize,
    pub n_errors: usize,
    /// (D, median estimation error) per distinct post-sample count.
    pub median_est_error_by_d: Vec<(usize, f64)>,
    /// Log-log slope of the median estimation error against D (needs at
    /// least two distinct D values).
    pub slope_loglog: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub rows: Vec<ExperimentRow>,
    pub summary: ExperimentSummary,
}

fn series_seed(seed: u64, cell: usize, series: usize, holdout: bool) -> u64 {
    let tag = if holdout { 0x9e37_79b9 } else { 0 };
    seed.wrapping_mul(1_000_003)
        .wrapping_add((cell as u64) << 24)
        .wrapping_add((series as u64) << 1)
        .wrapping_add(tag)
}

fn run_one(config: &RunConfig, cell_idx: usize, cell: &ExperimentCell, seed: u64) -> ExperimentRow {
    let started = Instant::now();
    let mut row = ExperimentRow {
        cell: cell_idx,
        seed,
        m: cell.m,
        l0: cell.coeffs.len(),
        d: None,
        lambda: None,
        l0_hat: None,
        est_error: None,
        false_discoveries: None,
        stability: None,
        prediction_mse: None,
        runtime_ms: 0,
        status: "ok".into(),
    };
    match evaluate_cell(config, cell_idx, cell, seed) {
        Ok((d, lambda, l0_hat, report)) => {
            row.d = Some(d);
            row.lambda = Some(lambda);
            row.l0_hat = Some(l0_hat);
            row.est_error = Some(report.est_error_l2);
            row.false_discoveries = Some(report.false_discoveries);
            row.stability = Some(report.stability_fraction);
            row.prediction_mse = Some(report.prediction_mse);
        }
        Err(e) => {
            row.status = format!("error: {e:#}");
        }
    }
    row.runtime_ms = started.elapsed().as_millis();
    row
}

fn evaluate_cell(
    config: &RunConfig,
    cell_idx: usize,
    cell: &ExperimentCell,
    seed: u64,
) -> Result<(usize, f64, usize, GuaranteeReport)> {
    let spec = ARProcessSpec::new(cell.coeffs.clone(), cell.sigma)?;
    let mut constants = config.constants.clone();
    let lambda_rule = match &cell.lambda {
        LambdaSpec::CrossValidated => LambdaRule::CrossValidated(CvConfig {
            explicit_grid: config.lambda_grid.clone(),
            ..CvConfig::default()
        }),
        LambdaSpec::Theory => LambdaRule::Theory,
        LambdaSpec::Fixed { value } => {
            constants.lambda_override = Some(*value);
            LambdaRule::Theory
        }
        LambdaSpec::Prefactor { value } => {
            constants.lambda_prefactor_override = Some(*value);
            LambdaRule::Theory
        }
    };

    // cell.t is the post-sample target, so the lag bound must be known
    // before simulation; without an explicit bound it is selected from
    // n_min = t.
    let lag = match cell.lag_bound {
        Some(l) => l,
        None => select_lag_bound(cell.t, cell.m, &constants)?,
    };
    let n = cell.t + lag;
    let series: Vec<Vec<f64>> = (0..cell.m)
        .map(|i| {
            simulate_ar(
                &spec,
                n,
                spec.default_burn_in(),
                series_seed(seed, cell_idx, i, false),
            )
            .map(|s| s.values)
        })
        .collect::<arlag::Result<_>>()?;
    let dataset = MultiSeriesDataset::from_series(series)?;

    let settings = PipelineSettings {
        lag_bound: Some(lag),
        lambda: lambda_rule,
        sigma_max: Some(cell.sigma),
    };
    let fit = run_pipeline(&dataset, &constants, config.mode, &settings, &config.solver)?;

    let design = build_design(&dataset, lag)?;
    let truth = pad_per_series(&vec![cell.coeffs.clone(); cell.m], lag);
    let est_error = estimation_error(fit.beta_hat.as_slice(), &truth)?;
    let fd = if fit.lambda_used > 0.0 {
        false_discoveries(fit.beta_hat.as_slice(), &truth, fit.lambda_used)?
    } else {
        0
    };
    let stability_fraction = fit.stability.iter().filter(|s| s.is_stable).count() as f64
        / fit.stability.len().max(1) as f64;

    // exact innovations over the regression window
    let mut noise = vec![0.0; design.d()];
    design.apply(&truth, &mut noise);
    for (u, y) in noise.iter_mut().zip(design.y()) {
        *u = y - *u;
    }
    let noise_surrogate = effective_noise_surrogate(&design, &noise)?;

    // restricted-eigenvalue probe of the first block, when the sparsity
    // level from the theory formula is usable at this size
    let re_min_ratio = if lag >= 2 {
        let s = re_sparsity_level(design.block_sizes()[0], constants.zeta(), lag);
        if (1..=lag).contains(&s) {
            let eps = arlag::ar::stability_report(&cell.coeffs, arlag::ar::DEFAULT_GRID_POINTS)?
                .epsilon_certified;
            empirical_re_ratio(&design, 0, cell.sigma, eps, 200, s, seed).unwrap_or(0.0)
        } else {
            0.0
        }
    } else {
        0.0
    };

    let holdout_series: Vec<Vec<f64>> = (0..cell.m)
        .map(|i| {
            simulate_ar(
                &spec,
                cell.holdout,
                spec.default_burn_in(),
                series_seed(seed, cell_idx, i, true),
            )
            .map(|s| s.values)
        })
        .collect::<arlag::Result<_>>()?;
    let holdout = MultiSeriesDataset::from_series(holdout_series)?;
    let prediction_mse = one_step_prediction_mse(&fit.beta_tilde, &holdout)?;

    let report = GuaranteeReport {
        est_error_l2: est_error,
        false_discoveries: fd,
        true_lag_recovered: fit.l0_hat == cell.coeffs.len(),
        effective_noise_surrogate: noise_surrogate,
        re_min_ratio,
        stability_fraction,
        prediction_mse,
    };
    Ok((design.d(), fit.lambda_used, fit.l0_hat, report))
}

pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    anyhow::ensure!(!config.cells.is_empty(), "experiment config has no cells");
    anyhow::ensure!(!config.seeds.is_empty(), "experiment config has no seeds");

    let jobs: Vec<(usize, u64)> = config
        .cells
        .iter()
        .enumerate()
        .flat_map(|(ci, _)| config.seeds.iter().map(move |&s| (ci, s)))
        .collect();
    let rows: Vec<ExperimentRow> = jobs
        .into_par_iter()
        .map(|(ci, seed)| run_one(config, ci, &config.cells[ci], seed))
        .collect();

    let n_errors = rows.iter().filter(|r| r.status != "ok").count();

    // median estimation error per distinct D
    let mut by_d: Vec<(usize, Vec<f64>)> = Vec::new();
    for row in &rows {
        if let (Some(d), Some(e)) = (row.d, row.est_error) {
            match by_d.iter_mut().find(|(dd, _)| *dd == d) {
                Some((_, v)) => v.push(e),
                None => by_d.push((d, vec![e])),
            }
        }
    }
    by_d.sort_by_key(|(d, _)| *d);
    let median_est_error_by_d: Vec<(usize, f64)> = by_d
        .into_iter()
        .map(|(d, mut v)| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            let med = if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            };
            (d, med)
        })
        .collect();

    let slope_loglog = if median_est_error_by_d.len() >= 2
        && median_est_error_by_d.iter().all(|(_, e)| *e > 0.0)
    {
        let xs: Vec<f64> = median_est_error_by_d
            .iter()
            .map(|(d, _)| (*d as f64).ln())
            .collect();
        let ys: Vec<f64> = median_est_error_by_d.iter().map(|(_, e)| e.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        Some(num / den)
    } else {
        None
    };

    Ok(ExperimentReport {
        schema_version: SCHEMA_VERSION,
        summary: ExperimentSummary {
            n_rows: rows.len(),
            n_errors,
            median_est_error_by_d,
            slope_loglog,
        },
        rows,
    })
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_report(report: &ExperimentReport, path: &Path, format: ReportFormat) -> Result<()> {
    match format {
        ReportFormat::Json => {
            crate::io::write_json(path, report)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)
                .with_context(|| format!("cannot write {}", path.display()))?;
            w.write_record([
                "row_type",
                "cell",
                "seed",
                "m",
                "l0",
                "d",
                "lambda",
                "l0_hat",
                "est_error",
                "false_discoveries",
                "stability",
                "prediction_mse",
                "runtime_ms",
                "status",
                "slope_loglog",
            ])?;
            for r in &report.rows {
                w.write_record([
                    "data".to_string(),
                    r.cell.to_string(),
                    r.seed.to_string(),
                    r.m.to_string(),
                    r.l0.to_string(),
                    opt(&r.d),
                    opt(&r.lambda),
                    opt(&r.l0_hat),
                    opt(&r.est_error),
                    opt(&r.false_discoveries),
                    opt(&r.stability),
                    opt(&r.prediction_mse),
                    r.runtime_ms.to_string(),
                    r.status.clone(),
                    String::new(),
                ])?;
            }
            let s = &report.summary;
            w.write_record([
                "summary".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("rows={} errors={}", s.n_rows, s.n_errors),
                opt(&s.slope_loglog),
            ])?;
            w.flush()?;
        }
    }
    Ok(())
}

/// Prints failing rows to stderr; returns whether any row failed.
pub fn report_failures(report: &ExperimentReport) -> bool {
    let mut failed = false;
    let stderr = std::io::stderr();
    let mut out = stderr.lock();
    for r in &report.rows {
        if r.status != "ok" {
            failed = true;
            let _ = writeln!(out, "cell {} seed {}: {}", r.cell, r.seed, r.status);
        }
    }
    failed
}
