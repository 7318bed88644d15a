//! Measures how well a fit matches the theoretical guarantees: estimation
//! error, false discoveries, effective-noise surrogate, empirical
//! restricted-eigenvalue ratios, spectral bounds, prediction error, and a
//! stability census over fitted models.
//!
//! The closed-form bound right-hand sides are evaluated with user-supplied
//! constants and reported alongside the measured quantities; at desk scale
//! the verbatim constants make them vacuous, so they are telemetry, not
//! assertions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ar::{stability_report, DEFAULT_GRID_POINTS};
use crate::design::{DesignSystem, MultiSeriesDataset};
use crate::error::{Error, Result};
use crate::pipeline::{FitResult, TheoryConstants};

/// Measured guarantee quantities for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeReport {
    /// `||beta_hat - beta||_2` over the full coefficient vector.
    pub est_error_l2: f64,
    /// `|S_lambda \ supp(beta)|`.
    pub false_discoveries: usize,
    /// Whether the thresholded lag estimate equals the true lag.
    pub true_lag_recovered: bool,
    /// `(2/D) L^{-1/2} ||X' U||_inf`.
    pub effective_noise_surrogate: f64,
    /// Minimum probed restricted-eigenvalue ratio over blocks (0 when no
    /// probe was valid).
    pub re_min_ratio: f64,
    /// Fraction of the fit's consolidated models that are stable.
    pub stability_fraction: f64,
    /// One-step-ahead mean squared forecast error on a holdout.
    pub prediction_mse: f64,
}

/// Euclidean distance between an estimate and the true coefficient vector.
pub fn estimation_error(beta_hat: &[f64], beta_true: &[f64]) -> Result<f64> {
    if beta_hat.len() != beta_true.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_hat.len(),
            got: beta_true.len(),
        });
    }
    Ok(beta_hat
        .iter()
        .zip(beta_true)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Pads per-series true coefficients with zeros to the layout length `M * L`.
pub fn pad_per_series(true_coeffs: &[Vec<f64>], lag: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(true_coeffs.len() * lag);
    for c in true_coeffs {
        assert!(c.len() <= lag, "true lag exceeds the layout lag bound");
        out.extend_from_slice(c);
        out.extend(std::iter::repeat(0.0).take(lag - c.len()));
    }
    out
}

/// `|{j : |beta_hat_j| > lambda} \ supp(beta_true)|`.
pub fn false_discoveries(beta_hat: &[f64], beta_true: &[f64], lambda: f64) -> Result<usize> {
    assert!(lambda > 0.0);
    if beta_hat.len() != beta_true.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_hat.len(),
            got: beta_true.len(),
        });
    }
    Ok(beta_hat
        .iter()
        .zip(beta_true)
        .filter(|(h, t)| h.abs() > lambda && **t == 0.0)
        .count())
}

/// Effective-noise surrogate `(2/D) L^{-1/2} ||X' U||_inf`, an upper bound
/// on `(2/D) N_star(X' U)` via the dual-norm inequality.
pub fn effective_noise_surrogate(design: &DesignSystem, residual_noise: &[f64]) -> Result<f64> {
    if residual_noise.len() != design.d() {
        return Err(Error::DimensionMismatch {
            expected: design.d(),
            got: residual_noise.len(),
        });
    }
    let mut xtu = vec![0.0; design.num_coeffs()];
    design.apply_transpose(residual_noise, &mut xtu);
    let inf = xtu.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
    Ok(2.0 / design.d() as f64 * inf / (design.lag() as f64).sqrt())
}

/// The sparsity level `s_m = 2 floor(T_m zeta^2 / (8 log L))` used by the
/// restricted-eigenvalue corollary. Requires `L >= 2`.
pub fn re_sparsity_level(t_m: usize, zeta: f64, lag: usize) -> usize {
    assert!(lag >= 2, "sparsity level needs log L > 0");
    2 * ((t_m as f64 * zeta * zeta) / (8.0 * (lag as f64).ln())).floor() as usize
}

/// Minimum over random `s`-sparse unit probes `v` of
/// `||X_m v||^2 / [(T_m sigma_m^2 eps^2 / 2)(||v||^2 - (2/s)||v||_1^2)]`,
/// skipping probes whose bracket is nonpositive. A ratio of at least one
/// means the restricted-eigenvalue event held for every valid probe.
///
/// Probes draw a uniform support of size `s` with standard normal
/// coefficients, then normalize.
pub fn empirical_re_ratio(
    design: &DesignSystem,
    m: usize,
    sigma_m: f64,
    epsilon: f64,
    n_probes: usize,
    s: usize,
    seed: u64,
) -> Result<f64> {
    assert!(n_probes >= 1);
    let lag = design.lag();
    assert!(s >= 1 && s <= lag, "sparsity level out of range");
    assert!(sigma_m > 0.0 && epsilon > 0.0);
    let block = &design.blocks()[m];
    let t_m = block.rows() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_ratio = f64::INFINITY;
    let mut valid = 0usize;
    let mut xv = vec![0.0; block.rows()];
    for _ in 0..n_probes {
        let support = rand::seq::index::sample(&mut rng, lag, s);
        let mut v = vec![0.0; lag];
        for idx in support.iter() {
            v[idx] = StandardNormal.sample(&mut rng);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let l1: f64 = v.iter().map(|x| x.abs()).sum();
        let bracket = 1.0 - 2.0 / s as f64 * l1 * l1;
        if bracket <= 0.0 {
            continue;
        }
        block.matvec(&v, &mut xv);
        let num: f64 = xv.iter().map(|x| x * x).sum();
        let den = t_m * sigma_m * sigma_m * epsilon * epsilon / 2.0 * bracket;
        min_ratio = min_ratio.min(num / den);
        valid += 1;
    }
    if valid == 0 {
        return Err(Error::DegenerateProbe { probes: n_probes });
    }
    Ok(min_ratio)
}

/// Spectral band `(m_f, M_f) = (min^2, max^2)` of the reverse characteristic
/// polynomial modulus over the unit-circle grid; by the maximum-modulus
/// principle the boundary extrema bound the closed disk.
pub fn spectral_band(coeffs: &[f64]) -> Result<(f64, f64)> {
    let report = stability_report(coeffs, DEFAULT_GRID_POINTS)?;
    if !report.is_stable {
        return Err(Error::UnstableProcess {
            spectral_radius: report.spectral_radius,
        });
    }
    Ok((
        report.min_modulus * report.min_modulus,
        report.max_modulus * report.max_modulus,
    ))
}

/// One-step-ahead mean squared forecast error of consolidated coefficients
/// on a holdout dataset, pooled over all series and time points.
pub fn one_step_prediction_mse(
    beta_tilde: &[Vec<f64>],
    holdout: &MultiSeriesDataset,
) -> Result<f64> {
    if beta_tilde.len() != holdout.num_series() {
        return Err(Error::DimensionMismatch {
            expected: holdout.num_series(),
            got: beta_tilde.len(),
        });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (m, (coeffs, series)) in beta_tilde.iter().zip(holdout.series()).enumerate() {
        let lag = coeffs.len();
        if series.len() <= lag {
            return Err(Error::LagTooLarge {
                series: m,
                len: series.len(),
                lag,
            });
        }
        for t in lag..series.len() {
            let pred: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(l, b)| b * series[t - l - 1])
                .sum();
            let e = series[t] - pred;
            total += e * e;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Fraction of consolidated models across the given fits whose stability
/// certificate holds.
pub fn stability_census(fit_results: &[FitResult]) -> f64 {
    assert!(!fit_results.is_empty());
    let mut stable = 0usize;
    let mut total = 0usize;
    for fit in fit_results {
        for report in &fit.stability {
            total += 1;
            if report.is_stable {
                stable += 1;
            }
        }
    }
    stable as f64 / total as f64
}

/// `alpha = min_m T_m sigma_m^2 / D`.
pub fn alpha_min_ratio(design: &DesignSystem, sigmas: &[f64]) -> f64 {
    assert_eq!(sigmas.len(), design.num_series());
    design
        .block_sizes()
        .iter()
        .zip(sigmas)
        .map(|(&t, &s)| t as f64 * s * s / design.d() as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Right-hand side of the estimation-error bound
/// `81 sqrt(84 A e) L L0 sigma_max^2 C#^{3/2} (1+eps^-2+eps^-4)
///  / (zeta alpha eps^2) * sqrt(log(ML/delta) / D)`.
#[allow(clippy::too_many_arguments)]
pub fn estimation_error_bound(
    constants: &TheoryConstants,
    sigma_max: f64,
    c_sharp: f64,
    alpha: f64,
    lag: usize,
    l0: usize,
    m: usize,
    d: usize,
) -> f64 {
    let eps = constants.epsilon;
    81.0 * (84.0 * constants.a * std::f64::consts::E).sqrt()
        * lag as f64
        * l0 as f64
        * sigma_max
        * sigma_max
        * c_sharp.powf(1.5)
        * (1.0 + eps.powi(-2) + eps.powi(-4))
        / (constants.zeta() * alpha * eps * eps)
        * (((m * lag) as f64 / constants.delta).ln() / d as f64).sqrt()
}

/// Right-hand side of the false-discovery bound; same shape with the
/// constant 243, an extra `sqrt(L0)`, and a division by `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn false_discovery_bound(
    constants: &TheoryConstants,
    sigma_max: f64,
    c_sharp: f64,
    alpha: f64,
    lag: usize,
    l0: usize,
    m: usize,
    d: usize,
    lambda: f64,
) -> f64 {
    let eps = constants.epsilon;
    243.0 * (84.0 * constants.a * std::f64::consts::E).sqrt()
        * lag as f64
        * (l0 as f64).powf(1.5)
        * sigma_max
        * sigma_max
        * c_sharp.powf(1.5)
        * (1.0 + eps.powi(-2) + eps.powi(-4))
        / (constants.zeta() * alpha * eps * eps * lambda)
        * (((m * lag) as f64 / constants.delta).ln() / d as f64).sqrt()
}

/// Probability floor `(1 - delta)(1 - 2 sum_m L^{-T_m / (4 log L)})` of the
/// estimation and false-discovery guarantees. Negative values just mean the
/// floor is vacuous at the given sizes.
pub fn recovery_probability_floor(delta: f64, block_sizes: &[usize], lag: usize) -> f64 {
    assert!(lag >= 2);
    let log_l = (lag as f64).ln();
    let tail: f64 = block_sizes
        .iter()
        .map(|&t| (lag as f64).powf(-(t as f64) / (4.0 * log_l)))
        .sum();
    (1.0 - delta) * (1.0 - 2.0 * tail)
}

/// Theory-mode effective-noise level (the `eta` the tuning parameter is
/// calibrated against).
pub fn eta_theory(
    constants: &TheoryConstants,
    sigma_max: f64,
    c_sharp: f64,
    m: usize,
    lag: usize,
    d: usize,
) -> f64 {
    let eps = constants.epsilon;
    8.0 * (84.0 * constants.a * std::f64::consts::E).sqrt() / constants.zeta()
        * (1.0 + eps.powi(-2) + eps.powi(-4))
        * c_sharp.powf(1.5)
        * sigma_max
        * sigma_max
        * ((lag as f64 * ((m * lag) as f64 / constants.delta).ln()) / (d * m) as f64).sqrt()
}

/// Minimum post-sample count `D` for the effective-noise tail bound to hold
/// at level `delta`, `8 sigma_max^2 (1+eps^-2+eps^-4) / (c0 eta) * log(ML/delta)`.
pub fn noise_bound_min_postsamples(
    constants: &TheoryConstants,
    sigma_max: f64,
    eta: f64,
    m: usize,
    lag: usize,
) -> f64 {
    let eps = constants.epsilon;
    8.0 * sigma_max * sigma_max * (1.0 + eps.powi(-2) + eps.powi(-4))
        / (constants.c0 * eta)
        * ((m * lag) as f64 / constants.delta).ln()
}
