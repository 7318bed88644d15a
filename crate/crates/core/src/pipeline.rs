//! End-to-end estimation pipeline: data-driven lag bound, tuning parameter
//! (theory formula or blocked cross-validation), group-LASSO fit, thresholded
//! lag estimate, and coefficient consolidation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ar::{stability_report, StabilityReport, DEFAULT_GRID_POINTS};
use crate::design::{build_design, DesignBlock, DesignSystem, MultiSeriesDataset};
use crate::error::{Error, Result};
use crate::hiergroup::{CoefVector, HierGroupStructure};
use crate::solver::{self, SolveTrace, SolverConfig};

/// Confidence and stability parameters driving the theory-mode formulas.
///
/// `c0` is the absolute constant of the Gaussian concentration inequality;
/// the source theory never fixes a numeric value for it, so the default 1/16
/// here is a configuration choice, not a derived quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TheoryConstants {
    /// Confidence parameter `A >= 1`.
    pub a: f64,
    /// Confidence level `delta` in (0, 1).
    pub delta: f64,
    /// Stability parameter `epsilon` in (0, 1).
    pub epsilon: f64,
    /// Override for `zeta`; defaults to `epsilon^4 / 216`.
    pub zeta: Option<f64>,
    /// Hanson-Wright-type absolute constant (not theory-derived; see above).
    pub c0: f64,
    /// Replaces the constant `84 A e zeta^-2` in the lag-bound equation.
    pub lag_constant_override: Option<f64>,
    /// Bypasses the tuning-parameter formula entirely.
    pub lambda_override: Option<f64>,
    /// Replaces every factor of the tuning-parameter formula except the
    /// trailing `sqrt(L log(ML/delta) / (D M))`.
    pub lambda_prefactor_override: Option<f64>,
}

impl Default for TheoryConstants {
    fn default() -> Self {
        Self {
            a: 1.0,
            delta: 0.1,
            epsilon: 0.9,
            zeta: None,
            c0: 1.0 / 16.0,
            lag_constant_override: None,
            lambda_override: None,
            lambda_prefactor_override: None,
        }
    }
}

impl TheoryConstants {
    pub fn new(a: f64, delta: f64, epsilon: f64) -> Result<Self> {
        let c = Self {
            a,
            delta,
            epsilon,
            ..Self::default()
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.a >= 1.0) {
            return bad(format!("A must be >= 1, got {}", self.a));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0,1), got {}", self.delta));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad(format!("epsilon must lie in (0,1), got {}", self.epsilon));
        }
        if let Some(z) = self.zeta {
            if !(z > 0.0) {
                return bad(format!("zeta must be positive, got {z}"));
            }
        }
        if !(self.c0 > 0.0) {
            return bad(format!("c0 must be positive, got {}", self.c0));
        }
        Ok(())
    }

    /// `zeta = epsilon^4 / 216` unless overridden.
    pub fn zeta(&self) -> f64 {
        self.zeta.unwrap_or(self.epsilon.powi(4) / 216.0)
    }

    /// The constant multiplying `L log(ML/delta)` in the lag-bound equation.
    pub fn lag_constant(&self) -> f64 {
        self.lag_constant_override
            .unwrap_or_else(|| 84.0 * self.a * std::f64::consts::E / self.zeta().powi(2))
    }
}

/// Largest integer lag bound `L >= 1` satisfying
/// `L (1 + C log(M L / delta)) <= n_min` with `T_m >= 1`, where
/// `C = 84 A e zeta^-2` unless overridden.
pub fn select_lag_bound(n_min: usize, m: usize, constants: &TheoryConstants) -> Result<usize> {
    assert!(n_min >= 2);
    assert!(m >= 1);
    let c = constants.lag_constant();
    let mut best = None;
    // the left-hand side is strictly increasing in L, so stop at first failure
    for l in 1..n_min {
        let lhs = l as f64 * (1.0 + c * ((m * l) as f64 / constants.delta).ln());
        if lhs <= n_min as f64 {
            best = Some(l);
        } else {
            break;
        }
    }
    best.ok_or(Error::LagBoundInfeasible { n_min })
}

/// Theory-mode tuning parameter
/// `lambda = 24 sqrt(84 A e) zeta^-1 sigma_max^2 C_sharp^{3/2}
///           (1 + eps^-2 + eps^-4) sqrt(L log(ML/delta) / (D M))`.
///
/// `lambda_override` short-circuits the formula; `lambda_prefactor_override`
/// replaces everything except the trailing square root.
pub fn compute_lambda(
    design: &DesignSystem,
    structure: &HierGroupStructure,
    constants: &TheoryConstants,
    sigma_max: f64,
) -> f64 {
    assert!(sigma_max > 0.0);
    if let Some(l) = constants.lambda_override {
        return l;
    }
    let m = structure.num_series() as f64;
    let l = structure.lag_bound() as f64;
    let d = design.d() as f64;
    let tail = (l * (m * l / constants.delta).ln() / (d * m)).sqrt();
    let prefactor = constants.lambda_prefactor_override.unwrap_or_else(|| {
        let eps = constants.epsilon;
        24.0 * (84.0 * constants.a * std::f64::consts::E).sqrt() / constants.zeta()
            * sigma_max
            * sigma_max
            * design.c_sharp().powf(1.5)
            * (1.0 + eps.powi(-2) + eps.powi(-4))
    });
    prefactor * tail
}

/// True iff every nonzero true coordinate has magnitude at least `c_beta`;
/// labels runs where the thresholded lag estimate is theoretically covered.
pub fn beta_min_check(beta_true: &[f64], c_beta: f64) -> bool {
    beta_true
        .iter()
        .all(|&b| b == 0.0 || b.abs() >= c_beta)
}

/// Consolidation mode requested by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Identical,
    Heterogeneous,
    Auto,
}

/// Mode actually applied after auto dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolvedMode {
    Identical,
    Heterogeneous,
}

/// How the winning grid point is picked from the cross-validation curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvSelection {
    /// The lambda with the smallest mean validation error.
    Min,
    /// The largest lambda whose mean error stays within one standard error
    /// of the minimum; favors sparser models and keeps noise-only inputs at
    /// the empty model.
    OneStdErr,
}

/// Cross-validation settings for the practical tuning-parameter choice:
/// `grid_points` log-spaced candidates spanning
/// `[grid_min_ratio, 1] * lambda_max`, scored by blocked K-fold one-step
/// prediction error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub grid_points: usize,
    pub grid_min_ratio: f64,
    pub selection: CvSelection,
    /// Replaces the automatic `[grid_min_ratio, 1] * lambda_max` grid.
    pub explicit_grid: Option<Vec<f64>>,
    pub solver: SolverConfig,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            grid_points: 20,
            grid_min_ratio: 1e-3,
            selection: CvSelection::OneStdErr,
            explicit_grid: None,
            solver: SolverConfig::for_cross_validation(),
        }
    }
}

/// How the tuning parameter is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    /// The closed-form formula (honoring overrides in [`TheoryConstants`]).
    Theory,
    /// Blocked cross-validation over a log grid below `lambda_max`.
    CrossValidated(CvConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    /// Explicit lag bound; otherwise [`select_lag_bound`] runs.
    pub lag_bound: Option<usize>,
    pub lambda: LambdaRule,
    /// Known innovation scale; otherwise estimated from ridge residuals.
    pub sigma_max: Option<f64>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            lag_bound: None,
            lambda: LambdaRule::CrossValidated(CvConfig::default()),
            sigma_max: None,
        }
    }
}

/// Where the fitted `lambda` came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaProvenance {
    Theory,
    Override,
    CrossValidated(CvTelemetry),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTelemetry {
    pub grid: Vec<f64>,
    pub mean_error: Vec<f64>,
    pub std_error: Vec<f64>,
    pub selected_index: usize,
    /// Effective-noise surrogate at the pilot fit's residuals; the final
    /// practical lambda is the max of the selected grid point and this.
    pub noise_floor: f64,
}

/// Output of the full pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Full group-LASSO solution over all `M * L` coordinates.
    pub beta_hat: CoefVector,
    /// The lag bound used for the regression.
    pub l_input: usize,
    pub lambda_used: f64,
    pub lambda_provenance: LambdaProvenance,
    /// Thresholded lag estimate; 0 when no coordinate exceeds `lambda`.
    pub l0_hat: usize,
    /// Consolidated per-series coefficients, truncated to `l0_hat` (all
    /// copies equal the per-series average in identical mode).
    pub beta_tilde: Vec<Vec<f64>>,
    pub mode: ResolvedMode,
    pub trace: SolveTrace,
    /// Stability certificate of each consolidated coefficient vector.
    pub stability: Vec<StabilityReport>,
}

/// Runs the full pipeline on a dataset.
pub fn run_pipeline(
    dataset: &MultiSeriesDataset,
    constants: &TheoryConstants,
    mode: Mode,
    settings: &PipelineSettings,
    solver_config: &SolverConfig,
) -> Result<FitResult> {
    constants.validate()?;
    let m = dataset.num_series();
    let lag = match settings.lag_bound {
        Some(l) => l,
        None => select_lag_bound(dataset.n_min(), m, constants)?,
    };
    let design = build_design(dataset, lag)?;
    let structure = HierGroupStructure::new(m, lag);

    let sigma_max = match settings.sigma_max {
        Some(s) => s,
        None => estimate_sigma_max(&design),
    };

    let (lambda, provenance) = match &settings.lambda {
        LambdaRule::Theory => {
            let l = compute_lambda(&design, &structure, constants, sigma_max);
            let prov = if constants.lambda_override.is_some() {
                LambdaProvenance::Override
            } else {
                LambdaProvenance::Theory
            };
            (l, prov)
        }
        LambdaRule::CrossValidated(cv) => {
            let (l, telemetry) = cross_validated_lambda(&design, &structure, cv)?;
            (l, LambdaProvenance::CrossValidated(telemetry))
        }
    };

    let (beta_hat, trace) = solver::fit(&design, &structure, lambda, solver_config)?;

    let resolved = resolve_mode(mode, &structure, beta_hat.as_slice(), lambda);
    let l0_hat = thresholded_lag(&structure, beta_hat.as_slice(), lambda, resolved);
    let beta_tilde = consolidate(&structure, beta_hat.as_slice(), l0_hat, resolved);
    let stability = beta_tilde
        .iter()
        .map(|coeffs| {
            if coeffs.is_empty() {
                trivial_stability_report()
            } else {
                stability_report(coeffs, DEFAULT_GRID_POINTS).expect("finite coefficients")
            }
        })
        .collect();

    Ok(FitResult {
        beta_hat,
        l_input: lag,
        lambda_used: lambda,
        lambda_provenance: provenance,
        l0_hat,
        beta_tilde,
        mode: resolved,
        trace,
        stability,
    })
}

/// Certificate of the empty coefficient vector: `f identically 1`.
fn trivial_stability_report() -> StabilityReport {
    StabilityReport {
        min_modulus: 1.0,
        max_modulus: 1.0,
        spectral_radius: 0.0,
        is_stable: true,
        epsilon_certified: 1.0,
    }
}

/// Auto dispatch: the per-series estimates agreeing within `2 lambda` in
/// sup norm is the practical stand-in for "all series share one process".
fn resolve_mode(mode: Mode, structure: &HierGroupStructure, beta: &[f64], lambda: f64) -> ResolvedMode {
    match mode {
        Mode::Identical => ResolvedMode::Identical,
        Mode::Heterogeneous => ResolvedMode::Heterogeneous,
        Mode::Auto => {
            let (m, l) = (structure.num_series(), structure.lag_bound());
            let mut spread = 0.0_f64;
            for j in 0..l {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for mi in 0..m {
                    let v = beta[mi * l + j];
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                spread = spread.max(hi - lo);
            }
            if spread <= 2.0 * lambda {
                ResolvedMode::Identical
            } else {
                ResolvedMode::Heterogeneous
            }
        }
    }
}

/// `L0_hat`: deepest lag whose coefficient strictly exceeds `lambda` --
/// in the first series for identical mode, in any series otherwise.
fn thresholded_lag(
    structure: &HierGroupStructure,
    beta: &[f64],
    lambda: f64,
    mode: ResolvedMode,
) -> usize {
    let (m, l) = (structure.num_series(), structure.lag_bound());
    let series_range = match mode {
        ResolvedMode::Identical => 0..1,
        ResolvedMode::Heterogeneous => 0..m,
    };
    let mut l0 = 0;
    for mi in series_range {
        for j in (0..l).rev() {
            if beta[mi * l + j].abs() > lambda {
                l0 = l0.max(j + 1);
                break;
            }
        }
    }
    l0
}

fn consolidate(
    structure: &HierGroupStructure,
    beta: &[f64],
    l0_hat: usize,
    mode: ResolvedMode,
) -> Vec<Vec<f64>> {
    let (m, l) = (structure.num_series(), structure.lag_bound());
    match mode {
        ResolvedMode::Heterogeneous => (0..m)
            .map(|mi| beta[mi * l..mi * l + l0_hat].to_vec())
            .collect(),
        ResolvedMode::Identical => {
            let mut avg = vec![0.0; l0_hat];
            for mi in 0..m {
                for j in 0..l0_hat {
                    avg[j] += beta[mi * l + j];
                }
            }
            for v in avg.iter_mut() {
                *v /= m as f64;
            }
            vec![avg; m]
        }
    }
}

/// Innovation-scale estimate: largest per-series residual standard deviation
/// of a lightly ridged least-squares fit (ridge 1e-6 for conditioning).
/// This is plumbing for when sigma_max is unknown, not a theory quantity.
pub fn estimate_sigma_max(design: &DesignSystem) -> f64 {
    let lag = design.lag();
    let mut sigma_sq_max = 0.0_f64;
    for (m, block) in design.blocks().iter().enumerate() {
        if block.rows() == 0 {
            continue;
        }
        let x = DMatrix::from_fn(block.rows(), lag, |r, c| block.get(r, c));
        let r0 = design.row_offset(m);
        let y = DVector::from_column_slice(&design.y()[r0..r0 + block.rows()]);
        let mut gram = x.transpose() * &x;
        for i in 0..lag {
            gram[(i, i)] += 1e-6;
        }
        let rhs = x.transpose() * &y;
        let coef = gram
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .unwrap_or_else(|| DVector::zeros(lag));
        let resid = &y - &x * coef;
        let sigma_sq = resid.norm_squared() / block.rows() as f64;
        sigma_sq_max = sigma_sq_max.max(sigma_sq);
    }
    sigma_sq_max.sqrt().max(f64::MIN_POSITIVE)
}

/// Smallest lambda that provably zeroes the solution:
/// `(2/D) * L^{-1/2} ||X' y||_inf` upper-bounds the dual norm of the
/// gradient at zero.
pub fn lambda_max(design: &DesignSystem, structure: &HierGroupStructure) -> f64 {
    let mut xty = vec![0.0; design.num_coeffs()];
    design.apply_transpose(design.y(), &mut xty);
    2.0 / design.d() as f64
        * structure
            .dual_norm_upper_bound(&xty)
            .expect("dimensions fixed by construction")
}

/// Blocked K-fold cross-validation of the tuning parameter on one-step-ahead
/// squared prediction error.
///
/// Each series' regression rows are split into `folds` contiguous blocks;
/// fold `k` trains on all rows outside block `k` and scores the held-out
/// rows. The grid is walked from the largest lambda down with warm starts.
///
/// Cross-validation alone is prediction-optimal and tends to sit below the
/// scale that separates signal from noise in the thresholding step, so the
/// returned lambda is the selected grid point floored at the
/// effective-noise surrogate `(2/D) L^{-1/2} ||X'(y - X beta_pilot)||_inf`
/// of a pilot fit at the selected point (the tuning parameter must dominate
/// the effective noise for the guarantees to apply).
pub fn cross_validated_lambda(
    design: &DesignSystem,
    structure: &HierGroupStructure,
    cv: &CvConfig,
) -> Result<(f64, CvTelemetry)> {
    assert!(cv.folds >= 2, "need at least two folds");
    assert!(cv.grid_points >= 2);
    assert!(cv.grid_min_ratio > 0.0 && cv.grid_min_ratio < 1.0);

    let lmax = lambda_max(design, structure);
    if lmax == 0.0 {
        // all-zero targets: any lambda gives the zero solution
        return Ok((
            0.0,
            CvTelemetry {
                grid: vec![0.0],
                mean_error: vec![0.0],
                std_error: vec![0.0],
                selected_index: 0,
                noise_floor: 0.0,
            },
        ));
    }
    let grid: Vec<f64> = match &cv.explicit_grid {
        Some(g) => {
            assert!(!g.is_empty() && g.iter().all(|l| *l >= 0.0));
            let mut g = g.clone();
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
            g
        }
        None => {
            let g = cv.grid_points;
            (0..g)
                .map(|i| lmax * cv.grid_min_ratio.powf(i as f64 / (g - 1) as f64))
                .collect()
        }
    };
    let g = grid.len();

    let folds = cv.folds;
    use rayon::prelude::*;
    let fold_results: Vec<(Vec<f64>, usize)> = (0..folds)
        .into_par_iter()
        .map(|k| cv_fold_errors(design, structure, &grid, k, folds, &cv.solver))
        .collect::<Result<Vec<_>>>()?;

    // per-fold mean errors, then mean and standard error across folds
    let fold_means: Vec<Vec<f64>> = fold_results
        .iter()
        .filter(|(_, count)| *count > 0)
        .map(|(errs, count)| errs.iter().map(|e| e / *count as f64).collect())
        .collect();
    let k_used = fold_means.len().max(1) as f64;
    let mean_error: Vec<f64> = (0..g)
        .map(|i| fold_means.iter().map(|f| f[i]).sum::<f64>() / k_used)
        .collect();
    let std_error: Vec<f64> = (0..g)
        .map(|i| {
            if fold_means.len() < 2 {
                return 0.0;
            }
            let var = fold_means
                .iter()
                .map(|f| (f[i] - mean_error[i]).powi(2))
                .sum::<f64>()
                / (k_used - 1.0);
            (var / k_used).sqrt()
        })
        .collect();

    let mut min_index = 0;
    for (i, e) in mean_error.iter().enumerate() {
        if *e < mean_error[min_index] {
            min_index = i;
        }
    }
    let selected_index = match cv.selection {
        CvSelection::Min => min_index,
        CvSelection::OneStdErr => {
            let cutoff = mean_error[min_index] + std_error[min_index];
            // grid is descending in lambda: the first index within the
            // cutoff is the largest such lambda
            (0..g).find(|&i| mean_error[i] <= cutoff).unwrap_or(min_index)
        }
    };

    // pilot fit at the selected point; its residuals estimate the
    // innovations, giving the empirical effective-noise floor
    let (pilot, _) = solver::fit(design, structure, grid[selected_index], &cv.solver)?;
    let mut residuals = vec![0.0; design.d()];
    design.apply(pilot.as_slice(), &mut residuals);
    for (r, y) in residuals.iter_mut().zip(design.y()) {
        *r = y - *r;
    }
    let noise_floor = crate::diagnostics::effective_noise_surrogate(design, &residuals)?;

    Ok((
        grid[selected_index].max(noise_floor),
        CvTelemetry {
            grid,
            mean_error,
            std_error,
            selected_index,
            noise_floor,
        },
    ))
}

fn cv_fold_errors(
    design: &DesignSystem,
    structure: &HierGroupStructure,
    grid: &[f64],
    fold: usize,
    folds: usize,
    solver_config: &SolverConfig,
) -> Result<(Vec<f64>, usize)> {
    let lag = design.lag();
    let mut train_blocks = Vec::with_capacity(design.num_series());
    let mut train_y = Vec::new();
    // validation rows kept as (series, local row) pairs
    let mut val_rows: Vec<(usize, usize)> = Vec::new();

    for (m, block) in design.blocks().iter().enumerate() {
        let t_m = block.rows();
        let lo = fold * t_m / folds;
        let hi = (fold + 1) * t_m / folds;
        let mut data = Vec::with_capacity((t_m - (hi - lo)) * lag);
        let r0 = design.row_offset(m);
        for r in 0..t_m {
            if r >= lo && r < hi {
                val_rows.push((m, r));
            } else {
                data.extend_from_slice(block.row(r));
                train_y.push(design.y()[r0 + r]);
            }
        }
        train_blocks.push(DesignBlock::new(data.len() / lag, lag, data));
    }
    let train = DesignSystem::from_blocks(train_blocks, train_y, lag);

    let mut errs = vec![0.0; grid.len()];
    let mut warm = vec![0.0; design.num_coeffs()];
    for (i, &lambda) in grid.iter().enumerate() {
        let (beta, _) = solver::fit_from(&train, structure, lambda, solver_config, &warm)?;
        warm = beta.as_slice().to_vec();
        let mut err = 0.0;
        for &(m, r) in &val_rows {
            let row = design.blocks()[m].row(r);
            let pred: f64 = row
                .iter()
                .zip(&warm[m * lag..(m + 1) * lag])
                .map(|(a, b)| a * b)
                .sum();
            let truth = design.y()[design.row_offset(m) + r];
            err += (truth - pred) * (truth - pred);
        }
        errs[i] = err;
    }
    Ok((errs, val_rows.len()))
}
