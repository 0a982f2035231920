//! Hidden stacks between the embeddings and the classification head.
//!
//! Backbones are selected by name through [`BackboneRegistry`]; `mlp` and
//! `resnet` are registered by default.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::dense::{relu, relu_backward, Dense};
use crate::nn::norm::{Dropout, LayerNorm};
use crate::nn::param::{Param, Parameterized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub kind: String,
    pub n_blocks: usize,
    pub d_block: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self {
            kind: "mlp".into(),
            n_blocks: 2,
            d_block: 64,
            dropout: 0.0,
        }
    }
}

pub trait Backbone: Send + Sync {
    fn kind(&self) -> &'static str;
    fn out_dim(&self) -> usize;
    /// Evaluation-mode forward pass (no dropout, no caching).
    fn forward(&self, x: &Array2<f64>) -> Array2<f64>;
    /// Forward pass that caches what `backward` needs.
    fn forward_train(&mut self, x: &Array2<f64>, training: bool, rng: &mut ChaCha8Rng) -> Array2<f64>;
    fn backward(&mut self, grad: &Array2<f64>) -> Result<Array2<f64>>;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    fn clear_cache(&mut self);
}

pub type BackboneFactory = fn(&BackboneSpec, usize, &mut ChaCha8Rng) -> Result<Box<dyn Backbone>>;

/// Name → constructor table for backbones.
#[derive(Clone)]
pub struct BackboneRegistry {
    factories: BTreeMap<String, BackboneFactory>,
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("mlp", |spec, in_dim, rng| Ok(Box::new(Mlp::new(spec, in_dim, rng)?)));
        r.register("resnet", |spec, in_dim, rng| Ok(Box::new(ResNet::new(spec, in_dim, rng)?)));
        r
    }
}

impl BackboneRegistry {
    pub fn register(&mut self, name: &str, factory: BackboneFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(&self, spec: &BackboneSpec, in_dim: usize, rng: &mut ChaCha8Rng) -> Result<Box<dyn Backbone>> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| Error::UnknownStrategy {
            kind: "backbone",
            name: spec.kind.clone(),
            registered: self.names().join(", "),
        })?;
        factory(spec, in_dim, rng)
    }
}

fn check_spec(spec: &BackboneSpec) -> Result<()> {
    if spec.n_blocks == 0 || spec.d_block == 0 {
        return Err(Error::Config("backbone needs n_blocks >= 1 and d_block >= 1".into()));
    }
    if !(0.0..1.0).contains(&spec.dropout) {
        return Err(Error::Config(format!("dropout {} outside [0, 1)", spec.dropout)));
    }
    Ok(())
}

/// `n_blocks` x (Dense → ReLU → Dropout).
pub struct Mlp {
    layers: Vec<(Dense, Dropout)>,
    outputs: Vec<Array2<f64>>,
}

impl Mlp {
    pub fn new(spec: &BackboneSpec, in_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_spec(spec)?;
        let layers = (0..spec.n_blocks)
            .map(|i| {
                let fan_in = if i == 0 { in_dim } else { spec.d_block };
                (
                    Dense::new(&format!("mlp.{i}"), fan_in, spec.d_block, rng),
                    Dropout::new(spec.dropout),
                )
            })
            .collect();
        Ok(Self {
            layers,
            outputs: Vec::new(),
        })
    }
}

impl Backbone for Mlp {
    fn kind(&self) -> &'static str {
        "mlp"
    }

    fn out_dim(&self) -> usize {
        self.layers.last().map(|(d, _)| d.out_dim()).unwrap_or(0)
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.layers
            .iter()
            .fold(x.clone(), |h, (dense, _)| relu(&dense.forward(&h)))
    }

    fn forward_train(&mut self, x: &Array2<f64>, training: bool, rng: &mut ChaCha8Rng) -> Array2<f64> {
        self.outputs.clear();
        let mut h = x.clone();
        for (dense, drop) in &mut self.layers {
            let a = relu(&dense.forward_train(&h));
            h = drop.forward_train(&a, training, rng);
            self.outputs.push(a);
        }
        h
    }

    fn backward(&mut self, grad: &Array2<f64>) -> Result<Array2<f64>> {
        if self.outputs.len() != self.layers.len() {
            return Err(Error::Contract("mlp: backward without forward".into()));
        }
        let mut g = grad.clone();
        for ((dense, drop), out) in self.layers.iter_mut().zip(self.outputs.drain(..)).rev() {
            g = drop.backward(&g);
            g = dense.backward(&relu_backward(&g, &out))?;
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|(d, _)| d.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(|(d, _)| d.params_mut()).collect()
    }

    fn clear_cache(&mut self) {
        self.outputs.clear();
        for (d, _) in &mut self.layers {
            d.clear_cache();
        }
    }
}

/// Pre-norm residual block: `x + W2·Dropout(ReLU(W1·LN(x) + b1)) + b2`.
pub struct ResBlock {
    pub norm: LayerNorm,
    pub inner: Dense,
    pub outer: Dense,
    dropout: Dropout,
    hidden: Option<Array2<f64>>,
}

impl ResBlock {
    pub fn new(name: &str, width: usize, dropout: f64, rng: &mut ChaCha8Rng) -> Self {
        Self {
            norm: LayerNorm::new(&format!("{name}.norm"), width),
            inner: Dense::new(&format!("{name}.inner"), width, width, rng),
            outer: Dense::new(&format!("{name}.outer"), width, width, rng),
            dropout: Dropout::new(dropout),
            hidden: None,
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let a = relu(&self.inner.forward(&self.norm.forward(x)));
        x + &self.outer.forward(&a)
    }

    pub fn forward_train(&mut self, x: &Array2<f64>, training: bool, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let a = relu(&self.inner.forward_train(&self.norm.forward_train(x)));
        let dropped = self.dropout.forward_train(&a, training, rng);
        let y = x + &self.outer.forward_train(&dropped);
        self.hidden = Some(a);
        y
    }

    pub fn backward(&mut self, grad: &Array2<f64>) -> Result<Array2<f64>> {
        let a = self
            .hidden
            .take()
            .ok_or_else(|| Error::Contract("res block: backward without forward".into()))?;
        let g = self.dropout.backward(&self.outer.backward(grad)?);
        let g = self.inner.backward(&relu_backward(&g, &a))?;
        Ok(grad + &self.norm.backward(&g)?)
    }

    fn clear_cache(&mut self) {
        self.hidden = None;
        self.norm.clear_cache();
        self.inner.clear_cache();
        self.outer.clear_cache();
    }
}

impl Parameterized for ResBlock {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.norm.params();
        p.extend(self.inner.params());
        p.extend(self.outer.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.norm.params_mut();
        p.extend(self.inner.params_mut());
        p.extend(self.outer.params_mut());
        p
    }
}

/// Input projection, `n_blocks` residual blocks, then LayerNorm → ReLU.
pub struct ResNet {
    project: Dense,
    blocks: Vec<ResBlock>,
    final_norm: LayerNorm,
    output: Option<Array2<f64>>,
}

impl ResNet {
    pub fn new(spec: &BackboneSpec, in_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        check_spec(spec)?;
        let project = Dense::new("resnet.project", in_dim, spec.d_block, rng);
        let blocks = (0..spec.n_blocks)
            .map(|i| ResBlock::new(&format!("resnet.block{i}"), spec.d_block, spec.dropout, rng))
            .collect();
        Ok(Self {
            project,
            blocks,
            final_norm: LayerNorm::new("resnet.final_norm", spec.d_block),
            output: None,
        })
    }
}

impl Backbone for ResNet {
    fn kind(&self) -> &'static str {
        "resnet"
    }

    fn out_dim(&self) -> usize {
        self.project.out_dim()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let h = self
            .blocks
            .iter()
            .fold(self.project.forward(x), |h, b| b.forward(&h));
        relu(&self.final_norm.forward(&h))
    }

    fn forward_train(&mut self, x: &Array2<f64>, training: bool, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut h = self.project.forward_train(x);
        for b in &mut self.blocks {
            h = b.forward_train(&h, training, rng);
        }
        let y = relu(&self.final_norm.forward_train(&h));
        self.output = Some(y.clone());
        y
    }

    fn backward(&mut self, grad: &Array2<f64>) -> Result<Array2<f64>> {
        let out = self
            .output
            .take()
            .ok_or_else(|| Error::Contract("resnet: backward without forward".into()))?;
        let mut g = self.final_norm.backward(&relu_backward(grad, &out))?;
        for b in self.blocks.iter_mut().rev() {
            g = b.backward(&g)?;
        }
        self.project.backward(&g)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.project.params();
        for b in &self.blocks {
            p.extend(b.params());
        }
        p.extend(self.final_norm.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.project.params_mut();
        for b in &mut self.blocks {
            p.extend(b.params_mut());
        }
        p.extend(self.final_norm.params_mut());
        p
    }

    fn clear_cache(&mut self) {
        self.output = None;
        self.project.clear_cache();
        self.final_norm.clear_cache();
        for b in &mut self.blocks {
            b.clear_cache();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zeroed_res_block_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut block = ResBlock::new("b", 5, 0.0, &mut rng);
        block.inner.weight.value.fill(0.0);
        block.outer.weight.value.fill(0.0);
        let x = Array2::from_shape_simple_fn((3, 5), || rng.random_range(-1.0..1.0));
        assert_eq!(block.forward(&x), x);
        assert_eq!(block.forward_train(&x, true, &mut rng), x);
    }

    #[test]
    fn registry_lists_builtins_and_rejects_unknown() {
        let reg = BackboneRegistry::default();
        assert_eq!(reg.names(), vec!["mlp", "resnet"]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = BackboneSpec {
            kind: "transformer".into(),
            ..Default::default()
        };
        assert!(matches!(
            reg.build(&spec, 4, &mut rng),
            Err(Error::UnknownStrategy { kind: "backbone", .. })
        ));
    }

    #[test]
    fn eval_forward_matches_training_forward_without_dropout() {
        let reg = BackboneRegistry::default();
        for kind in ["mlp", "resnet"] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let spec = BackboneSpec {
                kind: kind.into(),
                n_blocks: 3,
                d_block: 8,
                dropout: 0.0,
            };
            let mut b = reg.build(&spec, 6, &mut rng).unwrap();
            let x = Array2::from_shape_simple_fn((4, 6), || rng.random_range(-1.0..1.0));
            let y1 = b.forward(&x);
            let y2 = b.forward_train(&x, true, &mut rng);
            assert_eq!(y1, y2, "{kind}");
            assert_eq!(y1.ncols(), b.out_dim());
        }
    }
}
