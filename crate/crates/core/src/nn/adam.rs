use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for an ordered parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Array2<f64>>,
    second: Vec<Array2<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// One update over `params`, which must be passed in the same order
    /// every call. Refuses to touch anything if a gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
            self.second = self.first.clone();
        }
        if self.first.len() != params.len() {
            return Err(Error::shape(
                format!("{} parameter tensors", self.first.len()),
                params.len(),
            ));
        }
        for (p, m) in params.iter().zip(&self.first) {
            if p.grad.raw_dim() != m.raw_dim() {
                return Err(Error::shape(format!("{:?}", m.shape()), format!("{} {:?}", p.name, p.grad.shape())));
            }
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Training {
                    epoch: 0,
                    step: self.step as usize + 1,
                    reason: format!("non-finite gradient in {}", p.name),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
            let Param { value, grad, .. } = &mut **p;
            Zip::from(value)
                .and(&*grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
                });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::new("theta", array![[0.0]]);
        p.grad = array![[1.0]];
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        let lr = 1e-3;
        assert!((p.value[[0, 0]] + lr).abs() < 1e-6 * lr);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Param::new("w", array![[0.5, -2.0], [3.0, 1.0]]);
        let before = p.value.clone();
        let mut adam = AdamState::new(AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn identical_optimizers_have_identical_trajectories() {
        let run = || {
            let mut p = Param::new("w", array![[0.3, -0.7]]);
            let mut adam = AdamState::new(AdamConfig::default());
            let mut path = Vec::new();
            for i in 0..100 {
                // gradient of a shifted quadratic
                p.grad = p.value.mapv(|w| 2.0 * (w - 1.0) + (i as f64).sin() * 0.01);
                adam.step(&mut [&mut p]).unwrap();
                path.push(p.value.clone());
            }
            path
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut p = Param::new("w", array![[1.0]]);
        p.grad = array![[f64::NAN]];
        let mut adam = AdamState::new(AdamConfig::default());
        let err = adam.step(&mut [&mut p]).unwrap_err();
        assert!(matches!(err, Error::Training { .. }), "{err}");
        assert_eq!(p.value[[0, 0]], 1.0);
    }
}
