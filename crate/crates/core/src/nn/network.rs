use ndarray::{concatenate, s, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EncodedMatrix;
use crate::embed::{CategoricalEmbedding, EmbeddingInit, NumericEmbedding, NumericEmbeddingRegistry, NumericEmbeddingSpec};
use crate::error::{Error, Result};
use crate::nn::backbone::{Backbone, BackboneRegistry, BackboneSpec};
use crate::nn::dense::Dense;
use crate::nn::loss::{cross_entropy, softmax};
use crate::nn::param::{Param, Parameterized};

/// Both strategy registries a network is assembled from.
#[derive(Clone, Default)]
pub struct Registries {
    pub numeric: NumericEmbeddingRegistry,
    pub backbone: BackboneRegistry,
}

/// Architecture descriptor; everything needed to rebuild a network's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_numeric: usize,
    pub cardinalities: Vec<usize>,
    pub n_classes: usize,
    pub numeric_embedding: NumericEmbeddingSpec,
    pub backbone: BackboneSpec,
}

impl NetworkSpec {
    pub fn for_matrix(m: &EncodedMatrix, n_classes: usize, numeric: NumericEmbeddingSpec, backbone: BackboneSpec) -> Self {
        Self {
            n_numeric: m.numeric.ncols(),
            cardinalities: m.cardinalities.clone(),
            n_classes,
            numeric_embedding: numeric,
            backbone,
        }
    }
}

/// Embeddings → backbone → linear head producing class logits.
pub struct Network {
    spec: NetworkSpec,
    categorical: Vec<CategoricalEmbedding>,
    numeric: Box<dyn NumericEmbedding>,
    backbone: Box<dyn Backbone>,
    head: Dense,
    dropout_rng: ChaCha8Rng,
    cached_rows: Option<usize>,
}

impl Network {
    pub fn new(spec: NetworkSpec, train_numeric: &Array2<f64>, seed: u64) -> Result<Self> {
        Self::build(spec, EmbeddingInit::Fit(train_numeric.view()), &Registries::default(), seed)
    }

    pub fn build(spec: NetworkSpec, init: EmbeddingInit<'_>, registries: &Registries, seed: u64) -> Result<Self> {
        if spec.n_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if init.n_features() != spec.n_numeric {
            return Err(Error::shape(format!("{} numeric features", spec.n_numeric), init.n_features()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let categorical = spec
            .cardinalities
            .iter()
            .enumerate()
            .map(|(j, &c)| CategoricalEmbedding::new(&format!("cat.{j}"), c, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let numeric = registries.numeric.build(&spec.numeric_embedding, init, &mut rng)?;
        let in_dim = numeric.out_dim() + categorical.iter().map(|c| c.dim()).sum::<usize>();
        if in_dim == 0 {
            return Err(Error::Config("network has no inputs".into()));
        }
        let backbone = registries.backbone.build(&spec.backbone, in_dim, &mut rng)?;
        let head = Dense::new("head", backbone.out_dim(), spec.n_classes, &mut rng);
        Ok(Self {
            spec,
            categorical,
            numeric,
            backbone,
            head,
            dropout_rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d20b),
            cached_rows: None,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn numeric_embedding(&self) -> &dyn NumericEmbedding {
        self.numeric.as_ref()
    }

    pub fn numeric_embedding_mut(&mut self) -> &mut dyn NumericEmbedding {
        self.numeric.as_mut()
    }

    pub fn head_mut(&mut self) -> &mut Dense {
        &mut self.head
    }

    fn check_inputs(&self, numeric: &Array2<f64>, categorical: &Array2<usize>) -> Result<()> {
        if numeric.ncols() != self.spec.n_numeric {
            return Err(Error::shape(format!("{} numeric columns", self.spec.n_numeric), numeric.ncols()));
        }
        if categorical.ncols() != self.categorical.len() {
            return Err(Error::shape(
                format!("{} categorical columns", self.categorical.len()),
                categorical.ncols(),
            ));
        }
        if numeric.nrows() != categorical.nrows() {
            return Err(Error::shape(
                format!("{} categorical rows", numeric.nrows()),
                categorical.nrows(),
            ));
        }
        Ok(())
    }

    fn assemble(&self, num: Array2<f64>, cats: Vec<Array2<f64>>) -> Array2<f64> {
        let mut views = vec![num.view()];
        views.extend(cats.iter().map(|c| c.view()));
        concatenate(Axis(1), &views).expect("row counts agree")
    }

    /// Evaluation-mode logits.
    pub fn forward(&self, numeric: &Array2<f64>, categorical: &Array2<usize>) -> Result<Array2<f64>> {
        self.check_inputs(numeric, categorical)?;
        let num = self.numeric.forward(numeric)?;
        let cats = self
            .categorical
            .iter()
            .enumerate()
            .map(|(j, e)| e.forward(&categorical.column(j).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let h = self.backbone.forward(&self.assemble(num, cats));
        Ok(self.head.forward(&h))
    }

    /// Forward pass that caches activations for [`Network::backward`].
    /// Dropout is applied only when `training` is set.
    pub fn forward_train(
        &mut self,
        numeric: &Array2<f64>,
        categorical: &Array2<usize>,
        training: bool,
    ) -> Result<Array2<f64>> {
        self.check_inputs(numeric, categorical)?;
        let num = self.numeric.forward_train(numeric)?;
        let cats = self
            .categorical
            .iter_mut()
            .enumerate()
            .map(|(j, e)| e.forward_train(&categorical.column(j).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let x = self.assemble(num, cats);
        let h = self.backbone.forward_train(&x, training, &mut self.dropout_rng);
        self.cached_rows = Some(numeric.nrows());
        Ok(self.head.forward_train(&h))
    }

    pub fn backward(&mut self, grad_logits: &Array2<f64>) -> Result<()> {
        let rows = self
            .cached_rows
            .take()
            .ok_or_else(|| Error::Contract("network: backward without forward".into()))?;
        if grad_logits.nrows() != rows {
            return Err(Error::shape(format!("{rows} gradient rows"), grad_logits.nrows()));
        }
        let g = self.head.backward(grad_logits)?;
        let g = self.backbone.backward(&g)?;
        let mut offset = self.numeric.out_dim();
        self.numeric.backward(&g.slice(s![.., ..offset]).to_owned())?;
        for e in &mut self.categorical {
            let w = e.dim();
            e.backward(&g.slice(s![.., offset..offset + w]).to_owned())?;
            offset += w;
        }
        Ok(())
    }

    /// Mean cross-entropy on a batch, leaving its gradient accumulated in
    /// every parameter.
    pub fn loss_and_backward(
        &mut self,
        numeric: &Array2<f64>,
        categorical: &Array2<usize>,
        labels: &[usize],
        training: bool,
    ) -> Result<f64> {
        let logits = self.forward_train(numeric, categorical, training)?;
        let (loss, grad) = cross_entropy(&logits, labels)?;
        self.backward(&grad)?;
        Ok(loss)
    }

    pub fn loss(&self, numeric: &Array2<f64>, categorical: &Array2<usize>, labels: &[usize]) -> Result<f64> {
        Ok(cross_entropy(&self.forward(numeric, categorical)?, labels)?.0)
    }

    /// Softmax probabilities for every row of an encoded matrix.
    pub fn predict_proba(&self, m: &EncodedMatrix) -> Result<Array2<f64>> {
        const CHUNK: usize = 4096;
        let n = m.rows();
        let mut out = Array2::zeros((n, self.n_classes()));
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let num = m.numeric.slice(s![start..end, ..]).to_owned();
            let cat = m.categorical.slice(s![start..end, ..]).to_owned();
            out.slice_mut(s![start..end, ..]).assign(&softmax(&self.forward(&num, &cat)?));
        }
        Ok(out)
    }

    /// Mean validation loss, computed in chunks.
    pub fn mean_loss(&self, m: &EncodedMatrix) -> Result<f64> {
        let y = m.targets()?;
        let p = self.predict_proba(m)?;
        let total: f64 = y
            .iter()
            .enumerate()
            .map(|(i, &c)| -p[[i, c]].max(f64::MIN_POSITIVE).ln())
            .sum();
        Ok(total / y.len().max(1) as f64)
    }

    pub fn clear_cache(&mut self) {
        self.cached_rows = None;
        for c in &mut self.categorical {
            c.clear_cache();
        }
        self.numeric.clear_cache();
        self.backbone.clear_cache();
        self.head.clear_cache();
    }

    pub fn parameter_values(&self) -> Vec<Array2<f64>> {
        self.params().into_iter().map(|p| p.value.clone()).collect()
    }

    pub fn set_parameter_values(&mut self, values: &[Array2<f64>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::shape(format!("{} tensors", params.len()), values.len()));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.value.raw_dim() != v.raw_dim() {
                return Err(Error::shape(format!("{:?}", p.value.shape()), format!("{:?}", v.shape())));
            }
            p.value.assign(v);
        }
        Ok(())
    }
}

impl Parameterized for Network {
    fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.categorical.iter().flat_map(|c| c.params()).collect();
        p.extend(self.numeric.params());
        p.extend(self.backbone.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.categorical.iter_mut().flat_map(|c| c.params_mut()).collect();
        p.extend(self.numeric.params_mut());
        p.extend(self.backbone.params_mut());
        p.extend(self.head.params_mut());
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny(kind: &str, backbone: &str) -> (Network, Array2<f64>, Array2<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let num = Array2::from_shape_simple_fn((12, 2), || rng.random_range(-2.0..2.0));
        let cat = Array2::from_shape_simple_fn((12, 2), || rng.random_range(0..3));
        let spec = NetworkSpec {
            n_numeric: 2,
            cardinalities: vec![3, 4],
            n_classes: 3,
            numeric_embedding: NumericEmbeddingSpec {
                kind: kind.into(),
                dim: 3,
                n_bins: 4,
                n_frequencies: 2,
                frequency_init_std: 0.3,
            },
            backbone: BackboneSpec {
                kind: backbone.into(),
                n_blocks: 2,
                d_block: 8,
                dropout: 0.0,
            },
        };
        (Network::new(spec, &num, 1).unwrap(), num, cat)
    }

    #[test]
    fn zero_head_gives_uniform_softmax() {
        let (mut net, num, cat) = tiny("ql", "mlp");
        net.head_mut().weight.value.fill(0.0);
        let m = softmax(&net.forward(&num, &cat).unwrap());
        assert!(m.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn evaluation_forward_is_deterministic() {
        for kind in ["none", "ql", "plr"] {
            for bb in ["mlp", "resnet"] {
                let (net, num, cat) = tiny(kind, bb);
                let a = net.forward(&num, &cat).unwrap();
                assert_eq!(a, net.forward(&num, &cat).unwrap());
                let p = softmax(&a);
                for row in p.rows() {
                    assert!((row.sum() - 1.0).abs() < 1e-9);
                    assert!(row.iter().all(|v| v.is_finite()));
                }
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let (net, num, _) = tiny("none", "mlp");
        let bad = Array2::<usize>::zeros((12, 5));
        assert!(matches!(net.forward(&num, &bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn backward_without_forward_fails() {
        let (mut net, _, _) = tiny("none", "mlp");
        assert!(net.backward(&Array2::zeros((12, 3))).is_err());
    }

    #[test]
    fn same_seed_same_parameters() {
        let (a, _, _) = tiny("plr", "resnet");
        let (b, _, _) = tiny("plr", "resnet");
        assert_eq!(a.parameter_values(), b.parameter_values());
    }
}
