//! Nested group structure, hierarchical group norm, its dual-norm upper
//! bound, and the composed proximal operator.
//!
//! The groups are `G_l = {1..M} x {l..L}` for `l = 1..L`, so
//! `G_1 ⊃ G_2 ⊃ ... ⊃ G_L`, and the norm is
//!
//! ```text
//! N(beta) = sum_l sqrt(M (L - l + 1)) * ||beta_{G_l}||_F
//! ```
//!
//! Penalizing nested suffix blocks forces the zero pattern of a minimizer to
//! be suffix-closed in the lag index, which is what turns the group-LASSO
//! into a lag selector. The proximal operator of `N` factors into per-group
//! soft-thresholdings applied innermost group first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficient vector in the layout `(b^1_1..b^1_L, b^2_1..b^2_L, ...)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefVector {
    pub beta: Vec<f64>,
}

impl CoefVector {
    pub fn new(beta: Vec<f64>) -> Self {
        Self { beta }
    }

    pub fn zeros(len: usize) -> Self {
        Self { beta: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }

    /// The sub-vector of series `m` (0-based) for layout lag `l`.
    pub fn series(&self, m: usize, lag: usize) -> &[f64] {
        &self.beta[m * lag..(m + 1) * lag]
    }
}

/// The nested group structure for `M` series and lag bound `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierGroupStructure {
    m: usize,
    l: usize,
    weights: Vec<f64>,
}

impl HierGroupStructure {
    pub fn new(m: usize, l: usize) -> Self {
        assert!(m >= 1 && l >= 1);
        let weights = (1..=l)
            .map(|li| ((m * (l - li + 1)) as f64).sqrt())
            .collect();
        Self { m, l, weights }
    }

    pub fn num_series(&self) -> usize {
        self.m
    }

    pub fn lag_bound(&self) -> usize {
        self.l
    }

    pub fn num_coeffs(&self) -> usize {
        self.m * self.l
    }

    /// `sqrt(|G_l|) = sqrt(M (L - l + 1))` for 1-based `l`.
    pub fn group_weight(&self, l: usize) -> f64 {
        self.weights[l - 1]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn group_size(&self, l: usize) -> usize {
        self.m * (self.l - l + 1)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.num_coeffs() {
            return Err(Error::DimensionMismatch {
                expected: self.num_coeffs(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Sum over lags `j >= l` of the squared coordinates, per lag.
    fn lag_square_sums(&self, beta: &[f64]) -> Vec<f64> {
        let mut s = vec![0.0; self.l];
        for m in 0..self.m {
            for j in 0..self.l {
                let v = beta[m * self.l + j];
                s[j] += v * v;
            }
        }
        s
    }

    /// The hierarchical group norm `N(beta)`.
    pub fn group_norm(&self, beta: &[f64]) -> Result<f64> {
        self.check_len(beta)?;
        let lag_sq = self.lag_square_sums(beta);
        let mut suffix = 0.0;
        let mut norm = 0.0;
        for l in (1..=self.l).rev() {
            suffix += lag_sq[l - 1];
            norm += self.group_weight(l) * suffix.sqrt();
        }
        Ok(norm)
    }

    /// Upper bound `L^{-1/2} ||alpha||_inf` on the dual norm of `N`.
    pub fn dual_norm_upper_bound(&self, alpha: &[f64]) -> Result<f64> {
        self.check_len(alpha)?;
        let inf = alpha.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        Ok(inf / (self.l as f64).sqrt())
    }

    /// Proximal step of the single group `G_l` (1-based): group
    /// soft-thresholding of the suffix block with threshold
    /// `threshold * sqrt(|G_l|)`. A block whose norm ties the threshold
    /// exactly maps to zero.
    pub fn prox_single_group(&self, beta: &[f64], l: usize, threshold: f64) -> Vec<f64> {
        assert!(threshold >= 0.0);
        assert!((1..=self.l).contains(&l), "group index out of range");
        self.check_len(beta).expect("dimension mismatch");
        let mut out = beta.to_vec();
        let mut sq = 0.0;
        for m in 0..self.m {
            for j in (l - 1)..self.l {
                let v = beta[m * self.l + j];
                sq += v * v;
            }
        }
        let r = sq.sqrt();
        let t = threshold * self.group_weight(l);
        let scale = if r <= t { 0.0 } else { 1.0 - t / r };
        for m in 0..self.m {
            for j in (l - 1)..self.l {
                out[m * self.l + j] *= scale;
            }
        }
        out
    }

    /// Proximal operator of `threshold * N`, i.e. the composition of the
    /// single-group steps applied for `l = L, L-1, ..., 1`.
    ///
    /// One pass accumulates the running suffix square-sum (each step only
    /// rescales the suffix, so the update is multiplicative) and a second
    /// pass applies the per-lag prefix products, for O(M L) work in total.
    pub fn prox_hier(&self, beta: &[f64], threshold: f64) -> Vec<f64> {
        let mut out = beta.to_vec();
        self.prox_hier_in_place(&mut out, threshold);
        out
    }

    /// In-place variant of [`Self::prox_hier`].
    pub fn prox_hier_in_place(&self, beta: &mut [f64], threshold: f64) {
        assert!(threshold >= 0.0);
        self.check_len(beta).expect("dimension mismatch");
        let lag_sq = self.lag_square_sums(beta);
        let mut factors = vec![1.0_f64; self.l];
        let mut suffix = 0.0;
        for l in (1..=self.l).rev() {
            suffix += lag_sq[l - 1];
            let r = suffix.sqrt();
            let t = threshold * self.group_weight(l);
            let c = if r <= t { 0.0 } else { 1.0 - t / r };
            factors[l - 1] = c;
            suffix *= c * c;
        }
        // prefix[j] = c_1 * ... * c_{j+1}: lag j+1 is rescaled by every
        // group l <= j+1.
        let mut prod = 1.0;
        for f in factors.iter_mut() {
            prod *= *f;
            *f = prod;
        }
        for m in 0..self.m {
            for (j, f) in factors.iter().enumerate() {
                beta[m * self.l + j] *= f;
            }
        }
    }

    /// True when group `G_l` is identically zero in `beta`.
    pub fn group_is_zero(&self, beta: &[f64], l: usize) -> bool {
        (0..self.m).all(|m| ((l - 1)..self.l).all(|j| beta[m * self.l + j] == 0.0))
    }

    /// Checks that the set of zero groups is suffix-closed: if `G_l` is zero
    /// then so is every deeper `G_{l+r}`.
    pub fn zero_groups_suffix_closed(&self, beta: &[f64]) -> bool {
        let mut seen_zero = false;
        for l in 1..=self.l {
            let z = self.group_is_zero(beta, l);
            if seen_zero && !z {
                return false;
            }
            seen_zero = seen_zero || z;
        }
        true
    }
}
