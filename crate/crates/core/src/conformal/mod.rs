//! Regularized adaptive prediction sets and their diagnostics.

pub mod metrics;
pub mod raps;

pub use metrics::{conditional, coverage, efficiency, overall, SetStats};
pub use raps::{
    calibrate, conformal_quantile, quantile_rank, rank_order, raps_score, PredictionSet, RapsCalibration,
    RapsConfig,
};
