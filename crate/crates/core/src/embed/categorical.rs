use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::param::{Param, Parameterized};

/// Upper bound on categorical embedding width.
pub const MAX_EMBEDDING_DIM: usize = 50;

/// Embedding width for a feature with `cardinality` values:
/// `min(50, ceil((C + 1) / 2))`.
pub fn embedding_dim(cardinality: usize) -> Result<usize> {
    if cardinality < 1 {
        return Err(Error::Config("categorical cardinality must be >= 1".into()));
    }
    Ok(MAX_EMBEDDING_DIM.min((cardinality + 2) / 2))
}

/// Trainable `C x n` lookup table.
#[derive(Debug, Clone)]
pub struct CategoricalEmbedding {
    pub table: Param,
    indices: Option<Vec<usize>>,
}

impl CategoricalEmbedding {
    /// Rows drawn from N(0, 0.01²).
    pub fn new(name: &str, cardinality: usize, rng: &mut impl Rng) -> Result<Self> {
        let dim = embedding_dim(cardinality)?;
        let init = Normal::new(0.0, 0.01).expect("valid std");
        let table = Array2::from_shape_simple_fn((cardinality, dim), || init.sample(rng));
        Ok(Self {
            table: Param::new(format!("{name}.table"), table),
            indices: None,
        })
    }

    pub fn cardinality(&self) -> usize {
        self.table.value.nrows()
    }

    pub fn dim(&self) -> usize {
        self.table.value.ncols()
    }

    pub fn lookup(&self, index: usize) -> Result<ArrayView1<'_, f64>> {
        if index >= self.cardinality() {
            return Err(Error::Contract(format!(
                "{}: index {index} >= cardinality {}",
                self.table.name,
                self.cardinality()
            )));
        }
        Ok(self.table.value.row(index))
    }

    pub fn forward(&self, indices: &[usize]) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((indices.len(), self.dim()));
        for (mut row, &i) in out.rows_mut().into_iter().zip(indices) {
            row.assign(&self.lookup(i)?);
        }
        Ok(out)
    }

    pub fn forward_train(&mut self, indices: &[usize]) -> Result<Array2<f64>> {
        let out = self.forward(indices)?;
        self.indices = Some(indices.to_vec());
        Ok(out)
    }

    /// Scatters row gradients back into the table rows that were read.
    pub fn backward(&mut self, grad: &Array2<f64>) -> Result<()> {
        let idx = self
            .indices
            .take()
            .ok_or_else(|| Error::Contract(format!("{}: backward without forward", self.table.name)))?;
        if grad.nrows() != idx.len() || grad.ncols() != self.dim() {
            return Err(Error::shape(
                format!("{} x {}", idx.len(), self.dim()),
                format!("{} x {}", grad.nrows(), grad.ncols()),
            ));
        }
        for (g, &i) in grad.rows().into_iter().zip(&idx) {
            let mut row = self.table.grad.row_mut(i);
            row += &g;
        }
        Ok(())
    }

    pub fn clear_cache(&mut self) {
        self.indices = None;
    }
}

impl Parameterized for CategoricalEmbedding {
    fn params(&self) -> Vec<&Param> {
        vec![&self.table]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.table]
    }
}
