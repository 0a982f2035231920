//! Noisy quantile normalization onto a standard normal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::error::{Error, Result};

/// Empirical CDF levels are clipped to `[EPS, 1 - EPS]` before the inverse
/// normal CDF.
pub const CDF_CLIP: f64 = 1e-7;

/// Maximum number of stored reference quantiles.
pub const MAX_QUANTILES: usize = 1000;

/// Standard deviation of the tie-breaking noise (variance 1e-5).
pub fn default_noise_std() -> f64 {
    1e-5f64.sqrt()
}

/// Fitted map `x -> Φ⁻¹(F̂(x))` where `F̂` is the empirical CDF of the noisy
/// training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileNormalizer {
    /// Sorted feature values at evenly spaced levels.
    quantiles: Vec<f64>,
    /// Levels matching `quantiles`, from 0 to 1.
    references: Vec<f64>,
    /// Constant training feature: every transform is 0.
    degenerate: bool,
}

impl QuantileNormalizer {
    pub fn fit(train_values: &[f64], noise_std: f64, seed: u64) -> Result<Self> {
        if train_values.is_empty() {
            return Err(Error::Fit {
                what: "quantile normalizer",
                reason: "no training values".into(),
            });
        }
        if train_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit {
                what: "quantile normalizer",
                reason: "non-finite training value".into(),
            });
        }
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(Error::Config(format!("noise std {noise_std} must be >= 0")));
        }
        let first = train_values[0];
        if train_values.iter().all(|&v| v == first) {
            return Ok(Self {
                quantiles: vec![first],
                references: vec![0.5],
                degenerate: true,
            });
        }

        let mut noisy = train_values.to_vec();
        if noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, noise_std).expect("valid std");
            for v in &mut noisy {
                *v += noise.sample(&mut rng);
            }
        }
        noisy.sort_by(f64::total_cmp);

        let n_q = noisy.len().min(MAX_QUANTILES).max(2);
        let references: Vec<f64> = (0..n_q).map(|i| i as f64 / (n_q - 1) as f64).collect();
        let quantiles = references
            .iter()
            .map(|&p| empirical_quantile(&noisy, p))
            .collect();
        Ok(Self {
            quantiles,
            references,
            degenerate: false,
        })
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Empirical CDF level of `x`, averaging the forward and backward
    /// interpolation so runs of equal quantiles map to their midpoint.
    pub fn cdf_level(&self, x: f64) -> f64 {
        if self.degenerate {
            return 0.5;
        }
        let q = &self.quantiles;
        let r = &self.references;
        let n = q.len();
        if x <= q[0] {
            return r[0];
        }
        if x >= q[n - 1] {
            return r[n - 1];
        }
        // Largest i with q[i] <= x.
        let hi = q.partition_point(|&v| v <= x) - 1;
        let forward = lerp(q[hi], q[hi + 1], r[hi], r[hi + 1], x);
        // Smallest i with q[i] >= x.
        let lo = q.partition_point(|&v| v < x);
        let backward = lerp(q[lo - 1], q[lo], r[lo - 1], r[lo], x);
        0.5 * (forward + backward)
    }

    pub fn transform(&self, x: f64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let level = self.cdf_level(x).clamp(CDF_CLIP, 1.0 - CDF_CLIP);
        standard_normal().inverse_cdf(level)
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }
}

fn lerp(x0: f64, x1: f64, y0: f64, y1: f64, x: f64) -> f64 {
    if x1 == x0 {
        return 0.5 * (y0 + y1);
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn standard_normal() -> StdNormal {
    StdNormal::new(0.0, 1.0).expect("standard normal")
}

/// Linear-interpolated quantile of sorted data at level `p` in `[0, 1]`.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn lognormal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rand_distr::LogNormal::new(3.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    /// Brute-force rank transform: sort once, map the i-th order statistic
    /// to Φ⁻¹(i / (n-1)) with the same clipping.
    fn brute_force_ranks(values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut out = vec![0.0; n];
        for (rank, &i) in idx.iter().enumerate() {
            let level = (rank as f64 / (n - 1) as f64).clamp(CDF_CLIP, 1.0 - CDF_CLIP);
            out[i] = standard_normal().inverse_cdf(level);
        }
        out
    }

    fn ks_statistic(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let nd = standard_normal();
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = nd.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn median_maps_near_zero() {
        let xs = lognormal_sample(1000, 3);
        let qn = QuantileNormalizer::fit(&xs, default_noise_std(), 11).unwrap();
        let mut sorted = xs.clone();
        sorted.sort_by(f64::total_cmp);
        let median = empirical_quantile(&sorted, 0.5);
        assert!(qn.transform(median).abs() < 0.05);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let qn = QuantileNormalizer::fit(&[4.2; 50], default_noise_std(), 0).unwrap();
        assert!(qn.is_degenerate());
        for x in [-1e9, 0.0, 4.2, 1e9] {
            assert_eq!(qn.transform(x), 0.0);
        }
    }

    #[test]
    fn empty_input_is_a_fit_error() {
        assert!(matches!(
            QuantileNormalizer::fit(&[], 0.1, 0),
            Err(Error::Fit { .. })
        ));
    }

    #[test]
    fn train_transform_is_close_to_standard_normal() {
        let xs = lognormal_sample(10_000, 7);
        let qn = QuantileNormalizer::fit(&xs, default_noise_std(), 1).unwrap();
        let z = qn.transform_all(&xs);
        let oracle = brute_force_ranks(&xs);
        let ks = ks_statistic(z.clone());
        assert!(ks < 0.05, "KS statistic {ks}");
        assert!(ks_statistic(oracle.clone()) < 0.05);
        // Stored quantiles subsample the data, so agreement with the exact
        // rank transform is close but not exact.
        let max_level_gap = z
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (standard_normal().cdf(*a) - standard_normal().cdf(*b)).abs())
            .fold(0.0, f64::max);
        assert!(max_level_gap < 2e-3, "level gap {max_level_gap}");
    }

    #[test]
    fn transform_is_deterministic_given_seed() {
        let xs = lognormal_sample(500, 9);
        let a = QuantileNormalizer::fit(&xs, 0.5, 42).unwrap();
        let b = QuantileNormalizer::fit(&xs, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = QuantileNormalizer::fit(&xs, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn integer_features_land_mid_tie() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..5000).map(|_| rng.random_range(0..5) as f64).collect();
        let qn = QuantileNormalizer::fit(&xs, default_noise_std(), 2).unwrap();
        // 2 is the middle of five equally likely values.
        assert!(qn.transform(2.0).abs() < 0.1);
        assert!(qn.transform(0.0) < qn.transform(1.0));
    }

    proptest! {
        #[test]
        fn monotone(seed in 0u64..50, a in -10.0f64..200.0, b in -10.0f64..200.0) {
            let xs = lognormal_sample(300, seed);
            let qn = QuantileNormalizer::fit(&xs, default_noise_std(), seed).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(qn.transform(lo) <= qn.transform(hi));
            prop_assert!(qn.transform(lo).is_finite());
        }
    }
}
