//! Block-diagonal regression system built from multiple observed series.
//!
//! For each series the first `L` observations act as presamples; the
//! remaining `T_m = n_m - L` observations are regressed on their `L`
//! predecessors. Stacking the per-series systems gives the pair `(X, y)`
//! with `X` block-diagonal of shape `D x (M L)`, `D = sum T_m`. `X` is
//! never materialized densely: all products run blockwise.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// `M` observed series of possibly unequal lengths, with unique labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSeriesDataset {
    series: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl MultiSeriesDataset {
    pub fn new(series: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::InvalidDataset("no series provided".into()));
        }
        if series.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} series but {} labels",
                series.len(),
                labels.len()
            )));
        }
        for (m, s) in series.iter().enumerate() {
            if s.len() < 2 {
                return Err(Error::InvalidDataset(format!(
                    "series {} ({}) has {} samples, need at least 2",
                    m,
                    labels[m],
                    s.len()
                )));
            }
        }
        let mut sorted = labels.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDataset("labels are not unique".into()));
        }
        Ok(Self { series, labels })
    }

    /// Convenience constructor that labels series `s1, s2, ...`.
    pub fn from_series(series: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=series.len()).map(|i| format!("s{i}")).collect();
        Self::new(series, labels)
    }

    pub fn num_series(&self) -> usize {
        self.series.len()
    }

    pub fn series(&self) -> &[Vec<f64>] {
        &self.series
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_min(&self) -> usize {
        self.series.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// One dense block of the design matrix, stored row major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlock {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignBlock {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = B x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    /// `out = B^T r`.
    pub fn matvec_t(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        out.fill(0.0);
        for (ri, row) in r.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += ri * a;
            }
        }
    }

    /// Largest eigenvalue of `B^T B` by power iteration to relative
    /// tolerance `tol` on the eigenvalue residual.
    pub fn gram_operator_norm(&self, tol: f64) -> f64 {
        let n = self.cols;
        if n == 0 || self.rows == 0 {
            return 0.0;
        }
        // Deterministic start with a mild tilt so it is not orthogonal to
        // the leading eigenvector of structured blocks.
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.01 * (i as f64 + 1.0)).collect();
        normalize(&mut v);
        let mut bv = vec![0.0; self.rows];
        let mut w = vec![0.0; n];
        let mut lambda = 0.0_f64;
        for _ in 0..20_000 {
            self.matvec(&v, &mut bv);
            self.matvec_t(&bv, &mut w);
            let new_lambda: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
            let resid: f64 = w
                .iter()
                .zip(&v)
                .map(|(wi, vi)| (wi - new_lambda * vi).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm_w = normalize_into(&w, &mut v);
            lambda = new_lambda;
            if norm_w == 0.0 {
                return 0.0;
            }
            if resid <= tol * new_lambda.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        lambda
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn normalize_into(src: &[f64], dst: &mut [f64]) -> f64 {
    let n = src.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for (d, s) in dst.iter_mut().zip(src) {
            *d = s / n;
        }
    }
    n
}

/// The block-diagonal system `(X, y)` for a given lag bound.
#[derive(Debug)]
pub struct DesignSystem {
    blocks: Vec<DesignBlock>,
    y: Vec<f64>,
    block_sizes: Vec<usize>,
    row_offsets: Vec<usize>,
    d: usize,
    lag: usize,
    gram_norm: OnceLock<f64>,
}

impl Clone for DesignSystem {
    fn clone(&self) -> Self {
        Self {
            blocks: self.blocks.clone(),
            y: self.y.clone(),
            block_sizes: self.block_sizes.clone(),
            row_offsets: self.row_offsets.clone(),
            d: self.d,
            lag: self.lag,
            gram_norm: OnceLock::new(),
        }
    }
}

/// Builds the design system from a dataset and lag bound `L`.
///
/// Row `t` (1-based) of block `m` is `(x^m_{t-1}, ..., x^m_{t-L})` where the
/// first `L` observations of the series are the presamples, and `y` stacks
/// `(x^m_1, ..., x^m_{T_m})` over the series.
pub fn build_design(dataset: &MultiSeriesDataset, lag: usize) -> Result<DesignSystem> {
    assert!(lag >= 1, "lag bound must be positive");
    for (m, s) in dataset.series().iter().enumerate() {
        if s.len() <= lag {
            return Err(Error::LagTooLarge {
                series: m,
                len: s.len(),
                lag,
            });
        }
    }
    let mut blocks = Vec::with_capacity(dataset.num_series());
    let mut y = Vec::new();
    let mut block_sizes = Vec::with_capacity(dataset.num_series());
    let mut row_offsets = Vec::with_capacity(dataset.num_series());
    let mut d = 0;
    for s in dataset.series() {
        let t_m = s.len() - lag;
        let mut data = Vec::with_capacity(t_m * lag);
        for t in 1..=t_m {
            // observation index of x^m_t is lag + t - 1 (0-based)
            for l in 1..=lag {
                data.push(s[lag + t - 1 - l]);
            }
            y.push(s[lag + t - 1]);
        }
        blocks.push(DesignBlock::new(t_m, lag, data));
        block_sizes.push(t_m);
        row_offsets.push(d);
        d += t_m;
    }
    Ok(DesignSystem {
        blocks,
        y,
        block_sizes,
        row_offsets,
        d,
        lag,
        gram_norm: OnceLock::new(),
    })
}

impl DesignSystem {
    /// Row-subset constructor used by blocked cross-validation; block `m`
    /// keeps `blocks[m].rows()` regression rows of series `m`.
    pub(crate) fn from_blocks(blocks: Vec<DesignBlock>, y: Vec<f64>, lag: usize) -> Self {
        let block_sizes: Vec<usize> = blocks.iter().map(DesignBlock::rows).collect();
        let mut row_offsets = Vec::with_capacity(blocks.len());
        let mut d = 0;
        for &t in &block_sizes {
            row_offsets.push(d);
            d += t;
        }
        assert_eq!(y.len(), d);
        assert!(blocks.iter().all(|b| b.cols() == lag));
        Self {
            blocks,
            y,
            block_sizes,
            row_offsets,
            d,
            lag,
            gram_norm: OnceLock::new(),
        }
    }

    pub fn num_series(&self) -> usize {
        self.blocks.len()
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    /// Total number of post-samples `D`.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn blocks(&self) -> &[DesignBlock] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn row_offset(&self, m: usize) -> usize {
        self.row_offsets[m]
    }

    pub fn t_min(&self) -> usize {
        *self.block_sizes.iter().min().expect("at least one block")
    }

    pub fn t_max(&self) -> usize {
        *self.block_sizes.iter().max().expect("at least one block")
    }

    /// `C_sharp = T_max / T_min`.
    pub fn c_sharp(&self) -> f64 {
        self.t_max() as f64 / self.t_min() as f64
    }

    /// Number of coefficients `M * L`.
    pub fn num_coeffs(&self) -> usize {
        self.blocks.len() * self.lag
    }

    /// `out = X beta` exploiting block-diagonal structure.
    pub fn apply(&self, beta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(beta.len(), self.num_coeffs());
        debug_assert_eq!(out.len(), self.d);
        for (m, b) in self.blocks.iter().enumerate() {
            let r0 = self.row_offsets[m];
            b.matvec(
                &beta[m * self.lag..(m + 1) * self.lag],
                &mut out[r0..r0 + b.rows()],
            );
        }
    }

    /// `out = X^T r`.
    pub fn apply_transpose(&self, r: &[f64], out: &mut [f64]) {
        debug_assert_eq!(r.len(), self.d);
        debug_assert_eq!(out.len(), self.num_coeffs());
        for (m, b) in self.blocks.iter().enumerate() {
            let r0 = self.row_offsets[m];
            b.matvec_t(
                &r[r0..r0 + b.rows()],
                &mut out[m * self.lag..(m + 1) * self.lag],
            );
        }
    }

    /// `Lambda_max(X^T X)`, computed blockwise: the spectrum of a
    /// block-diagonal Gram matrix is the union of the blockwise spectra.
    /// Cached after the first call.
    pub fn gram_operator_norm(&self) -> f64 {
        *self.gram_norm.get_or_init(|| {
            self.blocks
                .iter()
                .map(|b| b.gram_operator_norm(1e-8))
                .fold(0.0, f64::max)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    fn dense(design: &DesignSystem) -> Vec<Vec<f64>> {
        let (d, p) = (design.d(), design.num_coeffs());
        let mut x = vec![vec![0.0; p]; d];
        for (m, b) in design.blocks().iter().enumerate() {
            for r in 0..b.rows() {
                for c in 0..b.cols() {
                    x[design.row_offset(m) + r][m * design.lag() + c] = b.get(r, c);
                }
            }
        }
        x
    }

    fn random_dataset(rng: &mut ChaCha8Rng, lens: &[usize]) -> MultiSeriesDataset {
        let series = lens
            .iter()
            .map(|&n| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        MultiSeriesDataset::from_series(series).unwrap()
    }

    #[test]
    fn smallest_case_layout() {
        let ds = MultiSeriesDataset::from_series(vec![vec![10.0, 20.0, 30.0]]).unwrap();
        let design = build_design(&ds, 1).unwrap();
        assert_eq!(design.d(), 2);
        assert_eq!(design.block_sizes(), &[2]);
        assert_eq!(design.y(), &[20.0, 30.0]);
        let b = &design.blocks()[0];
        assert_eq!((b.rows(), b.cols()), (2, 1));
        assert_eq!(b.get(0, 0), 10.0);
        assert_eq!(b.get(1, 0), 20.0);
    }

    #[test]
    fn two_series_shapes() {
        let ds = MultiSeriesDataset::from_series(vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![5.0, 6.0, 7.0, 8.0],
        ])
        .unwrap();
        let design = build_design(&ds, 2).unwrap();
        assert_eq!(design.d(), 4);
        assert_eq!(design.block_sizes(), &[2, 2]);
        assert_eq!(design.num_coeffs(), 4);
        // block 1, row t=1: (x_0, x_{-1}) = (2nd presample, 1st presample)
        assert_eq!(design.blocks()[0].row(0), &[2.0, 1.0]);
        assert_eq!(design.blocks()[0].row(1), &[3.0, 2.0]);
        assert_eq!(design.y(), &[3.0, 4.0, 7.0, 8.0]);
    }

    #[test]
    fn lag_too_large() {
        let ds = MultiSeriesDataset::from_series(vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0]])
            .unwrap();
        match build_design(&ds, 2) {
            Err(Error::LagTooLarge { series, len, lag }) => {
                assert_eq!((series, len, lag), (1, 2, 2));
            }
            other => panic!("expected LagTooLarge, got {other:?}"),
        }
    }

    #[test]
    fn dataset_validation() {
        assert!(MultiSeriesDataset::new(vec![], vec![]).is_err());
        assert!(MultiSeriesDataset::new(vec![vec![1.0]], vec!["a".into()]).is_err());
        assert!(MultiSeriesDataset::new(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec!["a".into(), "a".into()]
        )
        .is_err());
    }

    // Residual identity: || y - X beta ||^2 equals the direct double sum of
    // per-series one-step squared residuals.
    fn direct_double_sum(ds: &MultiSeriesDataset, lag: usize, beta: &[f64]) -> f64 {
        let mut total = 0.0;
        for (m, s) in ds.series().iter().enumerate() {
            let t_m = s.len() - lag;
            for t in 1..=t_m {
                let mut pred = 0.0;
                for l in 1..=lag {
                    pred += beta[m * lag + (l - 1)] * s[lag + t - 1 - l];
                }
                let r = s[lag + t - 1] - pred;
                total += r * r;
            }
        }
        total
    }

    #[test]
    fn residual_identity_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ds = random_dataset(&mut rng, &[50, 60, 70]);
        let lag = 5;
        let design = build_design(&ds, lag).unwrap();
        for _ in 0..20 {
            let beta: Vec<f64> = (0..design.num_coeffs())
                .map(|_| rng.gen_range(-2.0..2.0))
                .collect();
            let mut xb = vec![0.0; design.d()];
            design.apply(&beta, &mut xb);
            let lhs: f64 = design
                .y()
                .iter()
                .zip(&xb)
                .map(|(yi, xi)| (yi - xi) * (yi - xi))
                .sum();
            let rhs = direct_double_sum(&ds, lag, &beta);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * rhs.max(1.0),
                "lhs {lhs} rhs {rhs}"
            );
        }
    }

    #[test]
    fn off_block_entries_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ds = random_dataset(&mut rng, &[12, 9, 15]);
        let design = build_design(&ds, 3).unwrap();
        let x = dense(&design);
        for (m, b) in design.blocks().iter().enumerate() {
            for (r, row) in x.iter().enumerate() {
                let in_block = r >= design.row_offset(m) && r < design.row_offset(m) + b.rows();
                for c in m * 3..(m + 1) * 3 {
                    if !in_block {
                        assert_eq!(row[c], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn gram_norm_single_entry() {
        let b = DesignBlock::new(1, 1, vec![1.0]);
        assert!((b.gram_operator_norm(1e-10) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gram_norm_is_blockwise_max() {
        // diag blocks [[2]] and [[3]]: gram eigenvalues 4 and 9.
        let ds = MultiSeriesDataset::from_series(vec![vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let design = build_design(&ds, 1).unwrap();
        assert!((design.gram_operator_norm() - 9.0).abs() < 1e-7);
    }

    #[test]
    fn gram_norm_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data: Vec<f64> = (0..20 * 5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = DesignBlock::new(20, 5, data.clone());
        let x = nalgebra::DMatrix::from_row_slice(20, 5, &data);
        let gram = x.transpose() * &x;
        let oracle = nalgebra::SymmetricEigen::new(gram)
            .eigenvalues
            .iter()
            .cloned()
            .fold(0.0, f64::max);
        let got = b.gram_operator_norm(1e-10);
        assert!(
            (got - oracle).abs() <= 1e-6 * oracle,
            "power {got} vs dense {oracle}"
        );
    }

    proptest! {
        #[test]
        fn residual_identity_property(
            lens in proptest::collection::vec(6usize..20, 1..4),
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ds = random_dataset(&mut rng, &lens);
            let lag = 1 + (seed as usize % 4).min(lens.iter().min().unwrap() - 2);
            let design = build_design(&ds, lag).unwrap();
            let beta: Vec<f64> = (0..design.num_coeffs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut xb = vec![0.0; design.d()];
            design.apply(&beta, &mut xb);
            let lhs: f64 = design.y().iter().zip(&xb).map(|(a, b)| (a - b) * (a - b)).sum();
            let rhs = direct_double_sum(&ds, lag, &beta);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
        }
    }
}
