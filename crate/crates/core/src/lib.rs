//! Two-stage inbound load-plan prediction.
//!
//! A week-ahead model predicts the processing building of each planned load,
//! a second model predicts the sort from the same features plus that
//! building, and a day-of-operations model refines the sort once the
//! estimated arrival time is known. Each model's softmax output is turned
//! into a prediction set with regularized adaptive conformal calibration.

pub mod conformal;
pub mod data;
pub mod embed;
pub mod error;
pub mod harness;
pub mod nn;
pub mod predictor;
pub mod synth;

pub use error::{Error, Result};
