//! Finite-difference verification of analytic gradients.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::network::Network;
use crate::nn::param::Parameterized;

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub n_entries: usize,
    pub max_rel_error: f64,
}

/// |a - n| / max(|a| + |n|, 1e-6)
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6)
}

/// Adds uniform noise in `[-scale, scale]` to every parameter. Freshly
/// initialized networks have zero biases, which can leave ReLU
/// pre-activations exactly on the kink where finite differences are
/// one-sided.
pub fn jitter_parameters(net: &mut Network, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in net.params_mut() {
        p.value.mapv_inplace(|v| v + rng.random_range(-scale..=scale));
    }
}

/// Compares backprop gradients of the mean cross-entropy against central
/// differences with the given step, entry by entry over every parameter.
/// Dropout is disabled for both passes.
pub fn check_gradients(
    net: &mut Network,
    numeric: &Array2<f64>,
    categorical: &Array2<usize>,
    labels: &[usize],
    step: f64,
) -> Result<Vec<TensorCheck>> {
    net.zero_grad();
    net.loss_and_backward(numeric, categorical, labels, false)?;
    let analytic: Vec<Array2<f64>> = net.params().iter().map(|p| p.grad.clone()).collect();
    net.zero_grad();

    let mut out = Vec::with_capacity(analytic.len());
    for (t, grad) in analytic.iter().enumerate() {
        let shape = grad.raw_dim();
        let mut worst = 0.0f64;
        for idx in ndarray::indices(shape) {
            let original = net.params()[t].value[idx];
            net.params_mut()[t].value[idx] = original + step;
            let plus = net.loss(numeric, categorical, labels)?;
            net.params_mut()[t].value[idx] = original - step;
            let minus = net.loss(numeric, categorical, labels)?;
            net.params_mut()[t].value[idx] = original;
            let numeric_grad = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(grad[idx], numeric_grad));
        }
        out.push(TensorCheck {
            name: net.params()[t].name.clone(),
            n_entries: grad.len(),
            max_rel_error: worst,
        });
    }
    Ok(out)
}
