//! Versioned JSON checkpoints.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::embed::EmbeddingInit;
use crate::error::{Error, Result};
use crate::nn::network::{Network, NetworkSpec, Registries};
use crate::nn::param::Parameterized;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Hash of the feature schema the network was trained against.
    pub schema_hash: String,
    pub architecture: NetworkSpec,
    pub numeric_state: Value,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn capture(net: &Network, schema_hash: &str) -> Self {
        let tensors = net
            .params()
            .into_iter()
            .map(|p| Tensor {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                data: p.value.iter().copied().collect(),
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            schema_hash: schema_hash.to_string(),
            architecture: net.spec().clone(),
            numeric_state: net.numeric_embedding().state(),
            tensors,
        }
    }

    pub fn restore(&self, registries: &Registries) -> Result<Network> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let init = EmbeddingInit::Restore {
            n_features: self.architecture.n_numeric,
            state: &self.numeric_state,
        };
        let mut net = Network::build(self.architecture.clone(), init, registries, 0)?;
        {
            let mut params = net.params_mut();
            if params.len() != self.tensors.len() {
                return Err(Error::Checkpoint(format!(
                    "architecture has {} tensors, checkpoint has {}",
                    params.len(),
                    self.tensors.len()
                )));
            }
            for (p, t) in params.iter_mut().zip(&self.tensors) {
                if p.name != t.name || p.value.shape() != t.shape.as_slice() {
                    return Err(Error::Checkpoint(format!(
                        "tensor {} {:?} does not match {} {:?}",
                        t.name,
                        t.shape,
                        p.name,
                        p.value.shape()
                    )));
                }
                let shape = (t.shape[0], t.shape[1]);
                p.value = Array2::from_shape_vec(shape, t.data.clone())
                    .map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", t.name)))?;
            }
        }
        Ok(net)
    }

    /// Fails unless the checkpoint was trained against `schema_hash`.
    pub fn verify_schema(&self, schema_hash: &str) -> Result<()> {
        if self.schema_hash != schema_hash {
            return Err(Error::Checkpoint(format!(
                "schema hash mismatch: checkpoint {} vs schema {schema_hash}",
                self.schema_hash
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::NumericEmbeddingSpec;
    use crate::nn::backbone::BackboneSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(kind: &str, backbone: &str) -> (Network, Array2<f64>, Array2<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let num = Array2::from_shape_simple_fn((20, 3), || rng.random_range(-1.0..1.0));
        let cat = Array2::from_shape_simple_fn((20, 1), || rng.random_range(0..4));
        let spec = NetworkSpec {
            n_numeric: 3,
            cardinalities: vec![4],
            n_classes: 4,
            numeric_embedding: NumericEmbeddingSpec {
                kind: kind.into(),
                dim: 4,
                n_bins: 5,
                ..Default::default()
            },
            backbone: BackboneSpec {
                kind: backbone.into(),
                n_blocks: 1,
                d_block: 6,
                dropout: 0.1,
            },
        };
        (Network::new(spec, &num, 11).unwrap(), num, cat)
    }

    #[test]
    fn reloaded_network_predicts_identically() {
        let dir = tempfile::tempdir().unwrap();
        for kind in ["none", "ql", "plr"] {
            for bb in ["mlp", "resnet"] {
                let (net, num, cat) = fixture(kind, bb);
                let path = dir.path().join(format!("{kind}-{bb}.json"));
                Checkpoint::capture(&net, "abc").save(&path).unwrap();
                let loaded = Checkpoint::load(&path).unwrap();
                loaded.verify_schema("abc").unwrap();
                assert!(loaded.verify_schema("abd").is_err());
                let back = loaded.restore(&Registries::default()).unwrap();
                assert_eq!(net.forward(&num, &cat).unwrap(), back.forward(&num, &cat).unwrap());
            }
        }
    }

    #[test]
    fn version_and_shape_mismatch_rejected() {
        let (net, _, _) = fixture("ql", "mlp");
        let mut ck = Checkpoint::capture(&net, "h");
        ck.version = 99;
        assert!(matches!(ck.restore(&Registries::default()), Err(Error::Checkpoint(_))));
        let mut ck = Checkpoint::capture(&net, "h");
        ck.tensors[0].shape = vec![1, 1];
        assert!(ck.restore(&Registries::default()).is_err());
    }
}
