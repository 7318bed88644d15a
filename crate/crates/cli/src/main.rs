//! `arlag`: simulate panels of stable AR processes, jointly select their lag
//! and estimate coefficients, evaluate fits against known truth, and run
//! reproducible Monte Carlo experiments.

mod config;
mod experiment;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use arlag::ar::{simulate_ar, stability_report, ARProcessSpec, DEFAULT_GRID_POINTS};
use arlag::design::build_design;
use arlag::diagnostics::{
    effective_noise_surrogate, empirical_re_ratio, estimation_error, false_discoveries,
    one_step_prediction_mse, pad_per_series, re_sparsity_level,
};
use arlag::pipeline::{
    CvConfig, LambdaRule, Mode, PipelineSettings, TheoryConstants,
};
use arlag::solver::SolverConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{ReportFormat, RunConfig};
use crate::io::{FitResultFile, TruthFile, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "arlag", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Identical,
    Heterogeneous,
    Auto,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Identical => Mode::Identical,
            ModeArg::Heterogeneous => Mode::Heterogeneous,
            ModeArg::Auto => Mode::Auto,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SeriesFormat {
    Wide,
    Long,
}

#[derive(Args)]
struct ConstantsArgs {
    /// Confidence parameter A >= 1.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Confidence level delta in (0, 1).
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Stability parameter epsilon in (0, 1).
    #[arg(long, default_value_t = 0.9)]
    epsilon: f64,
    /// Override zeta (default epsilon^4 / 216).
    #[arg(long)]
    zeta: Option<f64>,
    /// Replace the lag-bound constant 84 A e zeta^-2.
    #[arg(long)]
    lag_constant: Option<f64>,
    /// Replace the lambda prefactor (everything except the trailing
    /// square-root factor).
    #[arg(long)]
    prefactor: Option<f64>,
}

impl ConstantsArgs {
    fn build(&self, lambda_override: Option<f64>) -> Result<TheoryConstants> {
        let c = TheoryConstants {
            a: self.a,
            delta: self.delta,
            epsilon: self.epsilon,
            zeta: self.zeta,
            lag_constant_override: self.lag_constant,
            lambda_prefactor_override: self.prefactor,
            lambda_override,
            ..TheoryConstants::default()
        };
        c.validate()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one or more series of a stable AR process.
    Simulate {
        /// Comma-separated coefficients, e.g. "0.5,-0.3".
        #[arg(long, value_delimiter = ',', required = true)]
        coeffs: Vec<f64>,
        /// Innovation standard deviation.
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Series length to keep after burn-in.
        #[arg(long)]
        n: usize,
        /// Base seed; series i uses seed + i.
        #[arg(long)]
        seed: u64,
        /// Burn-in length (default max(10 * lag, 500)).
        #[arg(long)]
        burn_in: Option<usize>,
        /// Number of series.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Output layout; defaults to wide for one series, long otherwise.
        #[arg(long, value_enum)]
        format: Option<SeriesFormat>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Fit the joint lag-selection estimator to observed series.
    Fit {
        /// Series files (wide or long CSV); multiple files are combined.
        #[arg(long, short, num_args = 1.., required = true)]
        input: Vec<PathBuf>,
        /// Explicit lag bound (otherwise selected from the data).
        #[arg(long = "L", value_name = "K")]
        lag_bound: Option<usize>,
        /// Fixed tuning parameter.
        #[arg(long, conflicts_with = "theory")]
        lambda: Option<f64>,
        /// Use the closed-form theory tuning parameter instead of
        /// cross-validation.
        #[arg(long)]
        theory: bool,
        /// Known innovation scale (otherwise estimated from ridge residuals).
        #[arg(long)]
        sigma_max: Option<f64>,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        /// Cross-validation folds.
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        constants: ConstantsArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Compare a fit result against known true coefficients.
    Eval {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// The series files the fit was computed from; enables the
        /// effective-noise and restricted-eigenvalue diagnostics.
        #[arg(long, num_args = 1..)]
        input: Option<Vec<PathBuf>>,
        /// Holdout series for the one-step prediction error.
        #[arg(long, num_args = 1..)]
        holdout: Option<Vec<PathBuf>>,
        /// Zeta for the restricted-eigenvalue sparsity level.
        #[arg(long, default_value_t = 0.25)]
        zeta: f64,
        /// Report destination (stdout when omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment grid from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output_path from the config.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct EvalReport {
    schema_version: u32,
    est_error_l2: f64,
    false_discoveries: usize,
    true_lag_recovered: bool,
    stability_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    effective_noise_surrogate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    re_min_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction_mse: Option<f64>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Simulate {
            coeffs,
            sigma,
            n,
            seed,
            burn_in,
            count,
            format,
            output,
        } => {
            anyhow::ensure!(count >= 1, "count must be at least 1");
            let spec = ARProcessSpec::new(coeffs, sigma)?;
            let burn = burn_in.unwrap_or_else(|| spec.default_burn_in());
            let series: Vec<Vec<f64>> = (0..count)
                .map(|i| simulate_ar(&spec, n, burn, seed + i as u64).map(|s| s.values))
                .collect::<arlag::Result<_>>()?;
            let wide = match format {
                Some(SeriesFormat::Wide) => true,
                Some(SeriesFormat::Long) => false,
                None => count == 1,
            };
            if wide {
                anyhow::ensure!(count == 1, "wide format holds a single series");
                io::save_series_wide(&output, &series[0])?;
            } else {
                let labels: Vec<String> = (1..=count).map(|i| format!("s{i}")).collect();
                io::save_series_long(&output, &labels, &series)?;
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Fit {
            input,
            lag_bound,
            lambda,
            theory,
            sigma_max,
            mode,
            folds,
            constants,
            output,
        } => {
            let dataset = io::load_dataset(&input)?;
            let constants = constants.build(lambda)?;
            let rule = if lambda.is_some() || theory {
                LambdaRule::Theory
            } else {
                LambdaRule::CrossValidated(CvConfig {
                    folds,
                    ..CvConfig::default()
                })
            };
            let settings = PipelineSettings {
                lag_bound,
                lambda: rule,
                sigma_max,
            };
            let fit = arlag::pipeline::run_pipeline(
                &dataset,
                &constants,
                mode.into(),
                &settings,
                &SolverConfig::default(),
            )?;
            io::write_json(&output, &FitResultFile::from_fit(&fit, dataset.labels()))?;
            eprintln!(
                "fit: L={} lambda={:.6} L0_hat={} mode={:?} converged={}",
                fit.l_input, fit.lambda_used, fit.l0_hat, fit.mode, fit.trace.converged
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Eval {
            fit,
            truth,
            input,
            holdout,
            zeta,
            output,
        } => {
            let fit: FitResultFile = io::read_json(&fit)?;
            let truth: TruthFile = io::read_json(&truth)?;
            let m = fit.labels.len();
            anyhow::ensure!(m >= 1 && fit.beta_hat.len() == m * fit.l_input);
            let per_series = truth.per_series(m)?;
            let true_lag = per_series.iter().map(Vec::len).max().unwrap_or(0);
            let padded = pad_per_series(&per_series, fit.l_input);

            let est_error_l2 = estimation_error(&fit.beta_hat, &padded)?;
            let fd = if fit.lambda_used > 0.0 {
                false_discoveries(&fit.beta_hat, &padded, fit.lambda_used)?
            } else {
                0
            };
            let stability_fraction = fit.stability.iter().filter(|s| s.is_stable).count() as f64
                / fit.stability.len().max(1) as f64;

            let mut noise_surrogate = None;
            let mut re_ratio = None;
            if let Some(paths) = &input {
                let dataset = io::load_dataset(paths)?;
                anyhow::ensure!(
                    dataset.num_series() == m,
                    "fit has {m} series, input has {}",
                    dataset.num_series()
                );
                let design = build_design(&dataset, fit.l_input)?;
                let mut u = vec![0.0; design.d()];
                design.apply(&padded, &mut u);
                for (ui, yi) in u.iter_mut().zip(design.y()) {
                    *ui = yi - *ui;
                }
                noise_surrogate = Some(effective_noise_surrogate(&design, &u)?);

                if fit.l_input >= 2 {
                    let sigma = truth.sigma.unwrap_or(1.0);
                    let ratios: Vec<f64> = (0..m)
                        .filter_map(|mi| {
                            let coeffs = &per_series[mi];
                            if coeffs.is_empty() {
                                return None;
                            }
                            let eps = stability_report(coeffs, DEFAULT_GRID_POINTS)
                                .ok()?
                                .epsilon_certified;
                            if eps <= 0.0 {
                                return None;
                            }
                            let s =
                                re_sparsity_level(design.block_sizes()[mi], zeta, fit.l_input);
                            if !(1..=fit.l_input).contains(&s) {
                                return None;
                            }
                            empirical_re_ratio(&design, mi, sigma, eps, 200, s, 0).ok()
                        })
                        .collect();
                    re_ratio = ratios
                        .into_iter()
                        .min_by(|a, b| a.partial_cmp(b).unwrap());
                }
            }

            let mut prediction = None;
            if let Some(paths) = &holdout {
                let holdout = io::load_dataset(paths)?;
                prediction = Some(one_step_prediction_mse(&fit.beta_tilde, &holdout)?);
            }

            let report = EvalReport {
                schema_version: SCHEMA_VERSION,
                est_error_l2,
                false_discoveries: fd,
                true_lag_recovered: fit.l0_hat == true_lag,
                stability_fraction,
                effective_noise_surrogate: noise_surrogate,
                re_min_ratio: re_ratio,
                prediction_mse: prediction,
            };
            match output {
                Some(path) => io::write_json(&path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Experiment { config, output } => {
            let cfg: RunConfig = io::read_json(&config)
                .with_context(|| format!("reading config {}", config.display()))?;
            cfg.constants.validate()?;
            anyhow::ensure!(
                cfg.command == "experiment",
                "config command is {:?}, expected \"experiment\"",
                cfg.command
            );
            let out_path = output
                .or_else(|| cfg.output_path.clone())
                .context("no output path (config output_path or -o)")?;
            let format = match out_path.extension().and_then(|e| e.to_str()) {
                Some("json") => ReportFormat::Json,
                Some("csv") => ReportFormat::Csv,
                _ => cfg.format,
            };
            let report = experiment::run_experiment(&cfg)?;
            experiment::write_report(&report, &out_path, format)?;
            if experiment::report_failures(&report) {
                eprintln!(
                    "{} of {} rows failed",
                    report.summary.n_errors, report.summary.n_rows
                );
                Ok(ExitCode::from(1))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}
