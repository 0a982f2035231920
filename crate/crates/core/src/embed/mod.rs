//! Categorical lookup tables and the pluggable numerical embeddings.
//!
//! Numerical embeddings are strategies behind [`NumericEmbedding`], created
//! by name from a [`NumericEmbeddingRegistry`]. The built-ins are `none`
//! (raw normalized values), `ql` and `plr`.

pub mod categorical;
pub mod ple;
pub mod plr;

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::nn::param::{Param, Parameterized};

pub use categorical::{embedding_dim, CategoricalEmbedding, MAX_EMBEDDING_DIM};
pub use ple::{fit_bin_edges, ple_encode, QlEmbedding};
pub use plr::{periodic, PlrEmbedding};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NumericEmbeddingSpec {
    pub kind: String,
    /// Output width per numeric feature (QL and PLR).
    pub dim: usize,
    /// QL bin count T.
    pub n_bins: usize,
    /// PLR frequency count k.
    pub n_frequencies: usize,
    /// Standard deviation of the PLR frequency initialization.
    pub frequency_init_std: f64,
}

impl Default for NumericEmbeddingSpec {
    fn default() -> Self {
        Self {
            kind: "ql".into(),
            dim: 16,
            n_bins: 16,
            n_frequencies: 8,
            frequency_init_std: 0.1,
        }
    }
}

impl NumericEmbeddingSpec {
    pub fn of_kind(kind: &str) -> Self {
        Self {
            kind: kind.into(),
            ..Default::default()
        }
    }
}

/// What a numerical embedding is built from.
pub enum EmbeddingInit<'a> {
    /// Fresh model: data-dependent state is fitted on the training block.
    Fit(ArrayView2<'a, f64>),
    /// Restoring a checkpoint: frozen state comes from [`NumericEmbedding::state`].
    Restore { n_features: usize, state: &'a Value },
}

impl EmbeddingInit<'_> {
    pub fn n_features(&self) -> usize {
        match self {
            EmbeddingInit::Fit(x) => x.ncols(),
            EmbeddingInit::Restore { n_features, .. } => *n_features,
        }
    }
}

pub trait NumericEmbedding: Send + Sync {
    fn kind(&self) -> &'static str;
    fn n_features(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>>;
    fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>>;
    /// Accumulates parameter gradients; numeric inputs are data, so nothing
    /// is propagated further.
    fn backward(&mut self, grad: &Array2<f64>) -> Result<()>;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    /// Frozen, non-trainable state needed to rebuild the embedding.
    fn state(&self) -> Value {
        Value::Null
    }
    fn clear_cache(&mut self) {}
}

pub type NumericEmbeddingFactory =
    fn(&NumericEmbeddingSpec, EmbeddingInit<'_>, &mut ChaCha8Rng) -> Result<Box<dyn NumericEmbedding>>;

#[derive(Clone)]
pub struct NumericEmbeddingRegistry {
    factories: BTreeMap<String, NumericEmbeddingFactory>,
}

impl Default for NumericEmbeddingRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("none", |_, init, _| {
            Ok(Box::new(Identity {
                n_features: init.n_features(),
            }))
        });
        r.register("ql", build_ql);
        r.register("plr", |spec, init, rng| {
            Ok(Box::new(PlrEmbedding::new(
                init.n_features(),
                spec.n_frequencies,
                spec.dim,
                spec.frequency_init_std,
                rng,
            )?))
        });
        r
    }
}

impl NumericEmbeddingRegistry {
    pub fn register(&mut self, name: &str, factory: NumericEmbeddingFactory) {
        self.factories.insert(name.to_string(), factory);
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn build(
        &self,
        spec: &NumericEmbeddingSpec,
        init: EmbeddingInit<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Box<dyn NumericEmbedding>> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| Error::UnknownStrategy {
            kind: "numeric embedding",
            name: spec.kind.clone(),
            registered: self.names().join(", "),
        })?;
        factory(spec, init, rng)
    }
}

fn build_ql(
    spec: &NumericEmbeddingSpec,
    init: EmbeddingInit<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<Box<dyn NumericEmbedding>> {
    let ql = match init {
        EmbeddingInit::Fit(x) => QlEmbedding::fit(x, spec.n_bins, spec.dim, rng)?,
        EmbeddingInit::Restore { n_features, state } => {
            let edges: Vec<Vec<f64>> = serde_json::from_value(state["edges"].clone())
                .map_err(|e| Error::Checkpoint(format!("QL bin edges: {e}")))?;
            if edges.len() != n_features {
                return Err(Error::Checkpoint(format!(
                    "QL state has {} features, expected {n_features}",
                    edges.len()
                )));
            }
            QlEmbedding::from_edges(edges, spec.dim, rng)?
        }
    };
    Ok(Box::new(ql))
}

/// Passes normalized numeric values straight to the backbone.
pub struct Identity {
    n_features: usize,
}

impl Identity {
    fn check(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.n_features {
            return Err(Error::shape(format!("{} numeric columns", self.n_features), x.ncols()));
        }
        Ok(())
    }
}

impl NumericEmbedding for Identity {
    fn kind(&self) -> &'static str {
        "none"
    }
    fn n_features(&self) -> usize {
        self.n_features
    }
    fn out_dim(&self) -> usize {
        self.n_features
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        Ok(x.clone())
    }
    fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.forward(x)
    }
    fn backward(&mut self, _grad: &Array2<f64>) -> Result<()> {
        Ok(())
    }
    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }
}

impl NumericEmbedding for QlEmbedding {
    fn kind(&self) -> &'static str {
        "ql"
    }
    fn n_features(&self) -> usize {
        QlEmbedding::n_features(self)
    }
    fn out_dim(&self) -> usize {
        QlEmbedding::out_dim(self)
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        QlEmbedding::forward(self, x)
    }
    fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        QlEmbedding::forward_train(self, x)
    }
    fn backward(&mut self, grad: &Array2<f64>) -> Result<()> {
        QlEmbedding::backward(self, grad)
    }
    fn params(&self) -> Vec<&Param> {
        Parameterized::params(self)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Parameterized::params_mut(self)
    }
    fn state(&self) -> Value {
        serde_json::json!({ "edges": self.edges() })
    }
    fn clear_cache(&mut self) {
        QlEmbedding::clear_cache(self)
    }
}

impl NumericEmbedding for PlrEmbedding {
    fn kind(&self) -> &'static str {
        "plr"
    }
    fn n_features(&self) -> usize {
        PlrEmbedding::n_features(self)
    }
    fn out_dim(&self) -> usize {
        PlrEmbedding::out_dim(self)
    }
    fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        PlrEmbedding::forward(self, x)
    }
    fn forward_train(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        PlrEmbedding::forward_train(self, x)
    }
    fn backward(&mut self, grad: &Array2<f64>) -> Result<()> {
        PlrEmbedding::backward(self, grad)
    }
    fn params(&self) -> Vec<&Param> {
        Parameterized::params(self)
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        Parameterized::params_mut(self)
    }
    fn clear_cache(&mut self) {
        PlrEmbedding::clear_cache(self)
    }
}
