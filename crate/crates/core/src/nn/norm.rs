use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::param::{Param, Parameterized};

const LN_EPS: f64 = 1e-5;

/// Per-row layer normalization with learned gain and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Param,
    pub shift: Param,
    cache: Option<(Array2<f64>, Array1<f64>)>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        Self {
            gain: Param::new(format!("{name}.gain"), Array2::ones((1, dim))),
            shift: Param::new(format!("{name}.shift"), Array2::zeros((1, dim))),
            cache: None,
        }
    }

    fn normalize(x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let d = x.ncols() as f64;
        let mean = x.sum_axis(Axis(1)) / d;
        let centered = x - &mean.view().insert_axis(Axis(1));
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let xhat = centered * &inv_std.view().insert_axis(Axis(1));
        (xhat, inv_std)
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let (xhat, _) = Self::normalize(x);
        xhat * &self.gain.value + &self.shift.value
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let (xhat, inv_std) = Self::normalize(x);
        let y = &xhat * &self.gain.value + &self.shift.value;
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        let (xhat, inv_std) = self
            .cache
            .take()
            .ok_or_else(|| Error::Contract(format!("{}: backward without forward", self.gain.name)))?;
        self.gain.grad += &(grad_out * &xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.shift.grad += &grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));

        let d = xhat.ncols() as f64;
        let gx = grad_out * &self.gain.value;
        let sum_g = gx.sum_axis(Axis(1)).insert_axis(Axis(1));
        let sum_gx = (&gx * &xhat).sum_axis(Axis(1)).insert_axis(Axis(1));
        let mut dx = gx * d - &sum_g - &(&xhat * &sum_gx);
        dx *= &(inv_std / d).insert_axis(Axis(1));
        Ok(dx)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl Parameterized for LayerNorm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.gain, &self.shift]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gain, &mut self.shift]
    }
}

/// Inverted dropout: active only in training mode.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    mask: Option<Array2<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        Self { rate, mask: None }
    }

    pub fn forward_train(&mut self, x: &Array2<f64>, training: bool, rng: &mut impl Rng) -> Array2<f64> {
        if !training || self.rate <= 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 - self.rate;
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Array2<f64> {
        match self.mask.take() {
            Some(m) => grad * &m,
            None => grad.clone(),
        }
    }
}
