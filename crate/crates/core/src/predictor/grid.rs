use serde::{Deserialize, Serialize};

use crate::data::EncodedMatrix;
use crate::error::{Error, Result};
use crate::predictor::train::{train_stage, StageSpec, TrainConfig, TrainedStage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTrial {
    pub n_blocks: usize,
    pub d_block: usize,
    pub validation_loss: f64,
}

pub struct GridResult {
    pub best: TrainedStage,
    pub trials: Vec<GridTrial>,
}

/// Index of the winning trial: lowest loss, then smaller d_block, then
/// smaller n_blocks.
pub fn select_best(trials: &[GridTrial]) -> Option<usize> {
    (0..trials.len()).min_by(|&a, &b| {
        let (x, y) = (&trials[a], &trials[b]);
        x.validation_loss
            .total_cmp(&y.validation_loss)
            .then(x.d_block.cmp(&y.d_block))
            .then(x.n_blocks.cmp(&y.n_blocks))
    })
}

/// Trains every (n_blocks, d_block) variant of `template` and keeps the one
/// with the lowest best-epoch validation loss.
pub fn grid_search(
    template: &StageSpec,
    grid: &[(usize, usize)],
    train: &EncodedMatrix,
    validation: &EncodedMatrix,
    n_classes: usize,
    config: &TrainConfig,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Config("grid search needs at least one candidate".into()));
    }
    let mut trials = Vec::with_capacity(grid.len());
    let mut trained = Vec::with_capacity(grid.len());
    for &(n_blocks, d_block) in grid {
        let mut spec = template.clone();
        spec.backbone.n_blocks = n_blocks;
        spec.backbone.d_block = d_block;
        spec.validate()?;
        let t = train_stage(&spec, train, validation, n_classes, config)?;
        trials.push(GridTrial {
            n_blocks,
            d_block,
            validation_loss: t.best_validation_loss(),
        });
        trained.push(Some(t));
    }
    let i = select_best(&trials).expect("nonempty grid");
    Ok(GridResult {
        best: trained[i].take().expect("trained"),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(n_blocks: usize, d_block: usize, loss: f64) -> GridTrial {
        GridTrial {
            n_blocks,
            d_block,
            validation_loss: loss,
        }
    }

    #[test]
    fn ties_prefer_small_width_then_depth() {
        let t = [trial(4, 128, 0.5), trial(3, 64, 0.5), trial(2, 64, 0.5), trial(2, 128, 0.5)];
        assert_eq!(select_best(&t), Some(2));
        let t = [trial(4, 128, 0.4), trial(2, 64, 0.5)];
        assert_eq!(select_best(&t), Some(0));
        assert_eq!(select_best(&[]), None);
    }
}
