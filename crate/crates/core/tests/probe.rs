//! Scratch diagnostics (not part of the acceptance gate). Ignored by
//! default; run with `cargo test --test probe -- --ignored --nocapture`.

use arlag::ar::{simulate_ar, ARProcessSpec};
use arlag::design::{build_design, MultiSeriesDataset};
use arlag::diagnostics::{false_discoveries, pad_per_series};
use arlag::hiergroup::HierGroupStructure;
use arlag::pipeline::{
    lambda_max, run_pipeline, select_lag_bound, LambdaProvenance, Mode, PipelineSettings,
    TheoryConstants,
};
use arlag::solver::SolverConfig;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha8Rng;

const AR2: [f64; 2] = [0.5, -0.3];

fn panel(lens: &[usize], seed: u64) -> MultiSeriesDataset {
    let spec = ARProcessSpec::new(AR2.to_vec(), 1.0).unwrap();
    let series: Vec<Vec<f64>> = lens
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            simulate_ar(&spec, n, 500, seed.wrapping_mul(1000).wrapping_add(i as u64))
                .unwrap()
                .values
        })
        .collect();
    MultiSeriesDataset::from_series(series).unwrap()
}

#[test]
#[ignore]
fn probe_floor_multiplier() {
    use arlag::pipeline::cross_validated_lambda;
    use arlag::solver;
    use rayon::prelude::*;

    for override_c in [2.5f64] {
    let constants = TheoryConstants {
        lag_constant_override: Some(override_c),
        ..TheoryConstants::default()
    };
    let mults = [1.0];
    let per_seed: Vec<Vec<(usize, usize)>> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(5005 + seed);
            let lens: Vec<usize> = (0..8).map(|_| rng.gen_range(300..=500)).collect();
            let lag = select_lag_bound(*lens.iter().min().unwrap(), 8, &constants).unwrap();
            let lens_n: Vec<usize> = lens.iter().map(|t| t + lag).collect();
            let ds = panel(&lens_n, seed);
            let design = build_design(&ds, lag).unwrap();
            let structure = HierGroupStructure::new(8, lag);
            let (_, tel) = cross_validated_lambda(
                &design,
                &structure,
                &arlag::pipeline::CvConfig::default(),
            )
            .unwrap();
            let base = tel.grid[tel.selected_index];
            let truth = pad_per_series(&vec![AR2.to_vec(); 8], lag);
            mults
                .iter()
                .map(|&mult| {
                    let lambda = base.max(mult * tel.noise_floor);
                    let (beta, _) = solver::fit(
                        &design,
                        &structure,
                        lambda,
                        &SolverConfig::default(),
                    )
                    .unwrap();
                    let l0 = (0..lag)
                        .rev()
                        .find(|&j| beta.as_slice()[j].abs() > lambda)
                        .map_or(0, |j| j + 1);
                    let fd = false_discoveries(beta.as_slice(), &truth, lambda).unwrap();
                    (l0, fd)
                })
                .collect()
        })
        .collect();
    for (mi, &mult) in mults.iter().enumerate() {
        let l0_hits = per_seed.iter().filter(|s| s[mi].0 == 2).count();
        let fd_hits = per_seed.iter().filter(|s| s[mi].1 == 0).count();
        println!("override {override_c} mult {mult}: L0=2 in {l0_hits}/50, FD=0 in {fd_hits}/50");
    }
    }
}

#[test]
#[ignore]
fn probe_lag_recovery() {
    let constants = TheoryConstants {
        lag_constant_override: Some(2.5),
        ..TheoryConstants::default()
    };
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5005 + seed);
        let lens: Vec<usize> = (0..8).map(|_| rng.gen_range(300..=500)).collect();
        let lag = select_lag_bound(*lens.iter().min().unwrap(), 8, &constants).unwrap();
        let lens_n: Vec<usize> = lens.iter().map(|t| t + lag).collect();
        let ds = panel(&lens_n, seed);
        let design = build_design(&ds, lag).unwrap();
        let structure = HierGroupStructure::new(8, lag);
        let lmax = lambda_max(&design, &structure);
        let settings = PipelineSettings {
            lag_bound: Some(lag),
            ..PipelineSettings::default()
        };
        let fit = run_pipeline(&ds, &constants, Mode::Identical, &settings, &SolverConfig::default())
            .unwrap();
        let truth = pad_per_series(&vec![AR2.to_vec(); 8], lag);
        let fd = false_discoveries(fit.beta_hat.as_slice(), &truth, fit.lambda_used).unwrap();
        let s1: Vec<f64> = fit.beta_hat.as_slice()[..lag].to_vec();
        let max_null: f64 = fit
            .beta_hat
            .as_slice()
            .iter()
            .zip(&truth)
            .filter(|(_, t)| **t == 0.0)
            .map(|(h, _)| h.abs())
            .fold(0.0, f64::max);
        let (sel, grid_lo, grid_hi) = match &fit.lambda_provenance {
            LambdaProvenance::CrossValidated(tel) => (
                tel.selected_index,
                tel.grid[tel.grid.len() - 1],
                tel.grid[0],
            ),
            _ => (usize::MAX, 0.0, 0.0),
        };
        println!(
            "seed {seed}: L={lag} D={} lambda={:.4} (lmax={:.4}, grid [{:.5},{:.4}] idx {sel}) L0={} fd={fd} max_null={:.4} s1={:?}",
            design.d(),
            fit.lambda_used,
            lmax,
            grid_lo,
            grid_hi,
            fit.l0_hat,
            max_null,
            s1.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
    }
}
