//! Periodic → Linear → ReLU numerical embedding with trainable frequencies.

use std::f64::consts::TAU;

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::dense::{relu, relu_backward, Dense};
use crate::nn::param::{Param, Parameterized};

/// `[sin(2πc·x), cos(2πc·x)]` for one feature column, shape `rows x 2k`.
pub fn periodic(x: ndarray::ArrayView1<f64>, freqs: ndarray::ArrayView1<f64>) -> Array2<f64> {
    let k = freqs.len();
    let mut out = Array2::zeros((x.len(), 2 * k));
    for (mut row, &xv) in out.rows_mut().into_iter().zip(x) {
        for (m, &c) in freqs.iter().enumerate() {
            let (sin, cos) = (TAU * c * xv).sin_cos();
            row[m] = sin;
            row[k + m] = cos;
        }
    }
    out
}

struct PlrCache {
    x: Array2<f64>,
    outputs: Vec<Array2<f64>>,
}

pub struct PlrEmbedding {
    /// `n_features x k`.
    pub frequencies: Param,
    linears: Vec<Dense>,
    dim: usize,
    cache: Option<PlrCache>,
}

impl PlrEmbedding {
    pub fn new(n_features: usize, k: usize, dim: usize, sigma: f64, rng: &mut impl Rng) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::Config("PLR embedding needs k >= 1 and d >= 1".into()));
        }
        let init = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("PLR sigma: {e}")))?;
        let freqs = Array2::from_shape_simple_fn((n_features, k), || init.sample(rng));
        let linears = (0..n_features)
            .map(|j| Dense::new(&format!("num.plr.{j}"), 2 * k, dim, rng))
            .collect();
        Ok(Self {
            frequencies: Param::new("num.plr.frequencies", freqs),
            linears,
            dim,
            cache: None,
        })
    }

    pub fn n_features(&self) -> usize {
        self.frequencies.value.nrows()
    }

    pub fn k(&self) -> usize {
        self.frequencies.value.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.n_features() * self.dim
    }

    pub fn linear_mut(&mut self, feature: usize) -> &mut Dense {
        &mut self.linears[feature]
    }

    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::shape(format!("{} numeric columns", self.n_features()), x.ncols()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let mut out = Array2::zeros((x.nrows(), self.out_dim()));
        for (j, lin) in self.linears.iter().enumerate() {
            let p = periodic(x.column(j), self.frequencies.value.row(j));
            out.slice_mut(s![.., j * self.dim..(j + 1) * self.dim])
                .assign(&relu(&lin.forward(&p)));
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let mut out = Array2::zeros((x.nrows(), self.out_dim()));
        let mut outputs = Vec::with_capacity(self.linears.len());
        for j in 0..self.linears.len() {
            let p = periodic(x.column(j), self.frequencies.value.row(j));
            let z = relu(&self.linears[j].forward_train(&p));
            out.slice_mut(s![.., j * self.dim..(j + 1) * self.dim]).assign(&z);
            outputs.push(z);
        }
        self.cache = Some(PlrCache { x: x.clone(), outputs });
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Result<()> {
        let PlrCache { x, outputs } = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract("PLR embedding: backward without forward".into()))?;
        let k = self.k();
        for (j, (lin, out)) in self.linears.iter_mut().zip(outputs).enumerate() {
            let g = grad.slice(s![.., j * self.dim..(j + 1) * self.dim]).to_owned();
            let g_periodic = lin.backward(&relu_backward(&g, &out))?;
            let freqs = self.frequencies.value.row(j);
            let mut g_freq = self.frequencies.grad.row_mut(j);
            for (row, &xv) in g_periodic.axis_iter(Axis(0)).zip(x.column(j)) {
                for m in 0..k {
                    let v = TAU * freqs[m] * xv;
                    let (sin, cos) = v.sin_cos();
                    g_freq[m] += TAU * xv * (row[m] * cos - row[k + m] * sin);
                }
            }
        }
        Ok(())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
        for l in &mut self.linears {
            l.clear_cache();
        }
    }
}

impl Parameterized for PlrEmbedding {
    fn params(&self) -> Vec<&Param> {
        let mut p = vec![&self.frequencies];
        p.extend(self.linears.iter().flat_map(|l| l.params()));
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = vec![&mut self.frequencies];
        p.extend(self.linears.iter_mut().flat_map(|l| l.params_mut()));
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_input_is_sines_then_cosines() {
        let p = periodic(array![0.0].view(), array![0.3, -1.2, 5.0].view());
        assert_eq!(p, array![[0.0, 0.0, 0.0, 1.0, 1.0, 1.0]]);
    }

    #[test]
    fn quarter_period() {
        let p = periodic(array![0.25].view(), array![1.0].view());
        assert!((p[[0, 0]] - 1.0).abs() < 1e-15);
        assert!(p[[0, 1]].abs() < 1e-15);
    }

    #[test]
    fn periodic_part_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array2::from_shape_simple_fn((40, 1), || rng.random_range(-1e3..1e3));
        let c = Array2::from_shape_simple_fn((1, 6), || rng.random_range(-3.0..3.0));
        let p = periodic(x.column(0), c.row(0));
        assert!(p.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn frequency_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut plr = PlrEmbedding::new(2, 3, 4, 0.5, &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((5, 2), || rng.random_range(-2.0..2.0));
        let w = Array2::from_shape_simple_fn((5, 8), || rng.random_range(-1.0..1.0));
        let loss = |p: &PlrEmbedding| (p.forward(&x).unwrap() * &w).sum();

        plr.forward_train(&x).unwrap();
        plr.backward(&w).unwrap();
        let analytic = plr.frequencies.grad.clone();
        let h = 1e-5;
        for j in 0..2 {
            for m in 0..3 {
                let orig = plr.frequencies.value[[j, m]];
                plr.frequencies.value[[j, m]] = orig + h;
                let up = loss(&plr);
                plr.frequencies.value[[j, m]] = orig - h;
                let down = loss(&plr);
                plr.frequencies.value[[j, m]] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = analytic[[j, m]];
                let rel = (fd - a).abs() / (fd.abs() + a.abs()).max(1e-6);
                assert!(rel < 1e-3, "c[{j},{m}]: fd {fd} analytic {a}");
            }
        }
    }
}
