//! Quantile piecewise-linear encoding (PLE) and the QL embedding built on it.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;

use crate::data::quantile::empirical_quantile;
use crate::error::{Error, Result};
use crate::nn::dense::Dense;
use crate::nn::param::{Param, Parameterized};

/// Piecewise-linear encoding of `x` against edges `b_0 <= ... <= b_T`.
///
/// Component `t` (1-based) is 0 below its bin, 1 above it, and the linear
/// fraction inside it. The first and last components keep the linear branch
/// outside `[b_0, b_T]`, so they extrapolate.
pub fn ple_encode(x: f64, edges: &[f64]) -> Vec<f64> {
    let t_max = edges.len().saturating_sub(1);
    (1..=t_max).map(|t| ple_component(x, edges, t, t_max)).collect()
}

fn ple_component(x: f64, edges: &[f64], t: usize, t_max: usize) -> f64 {
    let (lo, hi) = (edges[t - 1], edges[t]);
    if t > 1 && x < lo {
        0.0
    } else if t < t_max && x >= hi {
        1.0
    } else if hi == lo {
        // collapsed single-bin feature
        0.0
    } else {
        (x - lo) / (hi - lo)
    }
}

/// Edges at the `t/T` empirical quantiles of the training values, with
/// duplicates removed. A constant feature yields the single bin `[v, v]`.
pub fn fit_bin_edges(values: &[f64], n_bins: usize) -> Result<Vec<f64>> {
    if n_bins == 0 {
        return Err(Error::Config("QL embedding needs at least one bin".into()));
    }
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit {
            what: "QL bin edges",
            reason: "need finite training values".into(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (0..=n_bins)
        .map(|t| empirical_quantile(&sorted, t as f64 / n_bins as f64))
        .collect();
    edges.dedup();
    if edges.len() == 1 {
        edges.push(edges[0]);
    }
    Ok(edges)
}

/// Per-feature `Linear(PLE(x))`, concatenated in feature order.
pub struct QlEmbedding {
    edges: Vec<Vec<f64>>,
    linears: Vec<Dense>,
    dim: usize,
    encoded: Option<Vec<Array2<f64>>>,
}

impl QlEmbedding {
    pub fn fit(train: ArrayView2<f64>, n_bins: usize, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let edges = train
            .columns()
            .into_iter()
            .map(|c| fit_bin_edges(&c.to_vec(), n_bins))
            .collect::<Result<Vec<_>>>()?;
        Self::from_edges(edges, dim, rng)
    }

    pub fn from_edges(edges: Vec<Vec<f64>>, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("QL embedding dimension must be >= 1".into()));
        }
        for e in &edges {
            if e.len() < 2 || e.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Config("QL bin edges must be nondecreasing with T >= 1".into()));
            }
        }
        let linears = edges
            .iter()
            .enumerate()
            .map(|(j, e)| Dense::new(&format!("num.ql.{j}"), e.len() - 1, dim, rng))
            .collect();
        Ok(Self {
            edges,
            linears,
            dim,
            encoded: None,
        })
    }

    pub fn edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    pub fn linear_mut(&mut self, feature: usize) -> &mut Dense {
        &mut self.linears[feature]
    }

    fn encode_column(&self, x: &ArrayView2<f64>, j: usize) -> Array2<f64> {
        let edges = &self.edges[j];
        let t = edges.len() - 1;
        let mut out = Array2::zeros((x.nrows(), t));
        for (mut row, &v) in out.rows_mut().into_iter().zip(x.column(j)) {
            for (k, e) in ple_encode(v, edges).into_iter().enumerate() {
                row[k] = e;
            }
        }
        out
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.edges.len() {
            return Err(Error::shape(format!("{} numeric columns", self.edges.len()), x.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let view = x.view();
        let mut out = Array2::zeros((x.nrows(), self.edges.len() * self.dim));
        for (j, lin) in self.linears.iter().enumerate() {
            let z = lin.forward(&self.encode_column(&view, j));
            out.slice_mut(s![.., j * self.dim..(j + 1) * self.dim]).assign(&z);
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let view = x.view();
        let mut out = Array2::zeros((x.nrows(), self.edges.len() * self.dim));
        let mut encoded = Vec::with_capacity(self.edges.len());
        for j in 0..self.linears.len() {
            let e = self.encode_column(&view, j);
            let z = self.linears[j].forward_train(&e);
            out.slice_mut(s![.., j * self.dim..(j + 1) * self.dim]).assign(&z);
            encoded.push(e);
        }
        self.encoded = Some(encoded);
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Result<()> {
        if self.encoded.take().is_none() {
            return Err(Error::Contract("QL embedding: backward without forward".into()));
        }
        for (j, lin) in self.linears.iter_mut().enumerate() {
            let g = grad.slice(s![.., j * self.dim..(j + 1) * self.dim]).to_owned();
            lin.backward(&g)?;
        }
        Ok(())
    }

    pub fn out_dim(&self) -> usize {
        self.edges.len() * self.dim
    }

    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn clear_cache(&mut self) {
        self.encoded = None;
        for l in &mut self.linears {
            l.clear_cache();
        }
    }
}

impl Parameterized for QlEmbedding {
    fn params(&self) -> Vec<&Param> {
        self.linears.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.linears.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boundary_midpoint_and_extrapolation() {
        let b = [0.0, 10.0, 20.0];
        assert_eq!(ple_encode(10.0, &b), vec![1.0, 0.0]);
        assert_eq!(ple_encode(5.0, &b), vec![0.5, 0.0]);
        assert_eq!(ple_encode(25.0, &b), vec![1.0, 1.5]);
        assert_eq!(ple_encode(-5.0, &b), vec![-0.5, 0.0]);
    }

    #[test]
    fn duplicate_edges_are_removed() {
        let values = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 3.0];
        let e = fit_bin_edges(&values, 4).unwrap();
        assert!(e.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(e[0], 1.0);
        assert_eq!(*e.last().unwrap(), 3.0);
    }

    #[test]
    fn constant_feature_collapses_to_one_bin() {
        let e = fit_bin_edges(&[4.0; 10], 8).unwrap();
        assert_eq!(e, vec![4.0, 4.0]);
        assert_eq!(ple_encode(4.0, &e), vec![0.0]);
        assert_eq!(ple_encode(-3.0, &e), vec![0.0]);
    }

    #[test]
    fn zero_linear_weights_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let train = Array2::from_shape_fn((50, 2), |(i, j)| (i * (j + 1)) as f64);
        let mut ql = QlEmbedding::fit(train.view(), 4, 3, &mut rng).unwrap();
        for p in ql.params_mut() {
            p.value.fill(0.0);
        }
        let y = ql.forward(&ndarray::array![[3.0, -100.0], [1e4, 5.0]]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn affine_within_a_bin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = Array2::from_shape_fn((64, 1), |(i, _)| i as f64);
        let ql = QlEmbedding::fit(train.view(), 8, 4, &mut rng).unwrap();
        let e = &ql.edges()[0];
        let (x1, x2) = (e[2] + 0.1, e[3] - 0.3);
        let mid = 0.5 * (x1 + x2);
        let y = ql.forward(&ndarray::array![[x1], [x2], [mid]]).unwrap();
        for k in 0..4 {
            assert!((y[[2, k]] - 0.5 * (y[[0, k]] + y[[1, k]])).abs() < 1e-12);
        }
    }

    /// Closed form for `x` in `[b_0, b_T]`: ones up to the containing bin,
    /// the fraction inside it, zeros after, found by a linear scan.
    fn brute_force_ple(x: f64, edges: &[f64]) -> Vec<f64> {
        let t = edges.len() - 1;
        let mut bin = t - 1;
        for k in 0..t {
            if x < edges[k + 1] {
                bin = k;
                break;
            }
        }
        (0..t)
            .map(|k| match k.cmp(&bin) {
                std::cmp::Ordering::Less => 1.0,
                std::cmp::Ordering::Greater => 0.0,
                std::cmp::Ordering::Equal => (x - edges[k]) / (edges[k + 1] - edges[k]),
            })
            .collect()
    }

    #[test]
    fn interior_shape_matches_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let t = rng.random_range(1..10);
            let mut edges: Vec<f64> = (0..=t).map(|_| rng.random_range(-50.0..50.0)).collect();
            edges.sort_by(f64::total_cmp);
            edges.dedup();
            if edges.len() < 2 {
                continue;
            }
            let x = rng.random_range(edges[0]..=*edges.last().unwrap());
            assert_eq!(ple_encode(x, &edges), brute_force_ple(x, &edges));
        }
    }

    proptest! {
        #[test]
        fn componentwise_nondecreasing(a in -100.0f64..100.0, b in -100.0f64..100.0) {
            let edges = [-20.0, -3.0, 0.0, 7.5, 40.0];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for (u, v) in ple_encode(lo, &edges).iter().zip(ple_encode(hi, &edges)) {
                prop_assert!(*u <= v);
            }
        }
    }
}
