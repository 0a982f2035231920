use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::nn::param::{Param, Parameterized};

/// Affine layer `y = W x + b` with `W` stored `out x in`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    input: Option<Array2<f64>>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn new(name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let w = Array2::from_shape_simple_fn((out_dim, in_dim), || dist.sample(rng));
        Self::from_parts(name, w, Array2::zeros((1, out_dim)))
    }

    pub fn from_parts(name: &str, weight: Array2<f64>, bias: Array2<f64>) -> Self {
        assert_eq!(bias.shape(), &[1, weight.nrows()], "bias must be 1 x out");
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
            input: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.value.t()) + &self.bias.value
    }

    pub fn forward_train(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let y = self.forward(x);
        self.input = Some(x.clone());
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<Array2<f64>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Contract(format!("{}: backward without forward", self.weight.name)))?;
        if grad_out.nrows() != x.nrows() || grad_out.ncols() != self.out_dim() {
            return Err(Error::shape(
                format!("{} x {}", x.nrows(), self.out_dim()),
                format!("{} x {}", grad_out.nrows(), grad_out.ncols()),
            ));
        }
        self.weight.grad += &grad_out.t().dot(&x);
        self.bias.grad += &grad_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok(grad_out.dot(&self.weight.value))
    }

    pub fn clear_cache(&mut self) {
        self.input = None;
    }
}

impl Parameterized for Dense {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given the layer's output.
pub fn relu_backward(grad: &Array2<f64>, output: &Array2<f64>) -> Array2<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(output, |g, &o| {
        if o <= 0.0 {
            *g = 0.0
        }
    });
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_map() {
        let d = Dense::from_parts("d", array![[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]], array![[0.5, 0.0, -1.0]]);
        let y = d.forward(&array![[1.0, 1.0]]);
        assert_eq!(y, array![[3.5, -1.0, 2.5]]);
    }

    #[test]
    fn glorot_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = Dense::new("d", 10, 6, &mut rng);
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(d.weight.value.iter().all(|w| w.abs() <= limit));
        assert!(d.bias.value.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn backward_requires_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Dense::new("d", 2, 2, &mut rng);
        assert!(matches!(d.backward(&Array2::zeros((1, 2))), Err(Error::Contract(_))));
    }

    #[test]
    fn duplicated_row_doubles_its_contribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Dense::new("d", 3, 2, &mut rng);
        let x = array![[0.3, -1.0, 2.0]];
        let g = array![[1.0, -0.5]];
        d.forward_train(&x);
        d.backward(&g).unwrap();
        let single = d.weight.grad.clone();
        d.zero_grad();
        let x2 = ndarray::concatenate![Axis(0), x, x];
        let g2 = ndarray::concatenate![Axis(0), g, g];
        d.forward_train(&x2);
        d.backward(&g2).unwrap();
        assert_eq!(d.weight.grad, &single * 2.0);
    }
}
