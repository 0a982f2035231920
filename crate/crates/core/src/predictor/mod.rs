//! Training and inference for the three-stage cascade: the week-ahead
//! building model, the week-ahead sort model and the day-of-operations sort
//! model. Sort models train on the true building and infer on the predicted one.

pub mod cascade;
pub mod early_stopping;
pub mod grid;
pub mod train;

pub use cascade::{Cascade, CascadePrediction, StagePrediction, WiringManifest};
pub use early_stopping::{EarlyStopping, Verdict};
pub use grid::{grid_search, GridResult, GridTrial};
pub use train::{train_stage, StageSpec, TrainConfig, TrainedStage, TrainingCurve};

/// Fraction of positions where the two label vectors agree.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return f64::NAN;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}
