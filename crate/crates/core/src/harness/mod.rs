//! Multi-horizon experiment protocol and its reports.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{derive_seed, DataSource, ExperimentConfig, StageSpecs};
pub use experiment::{
    calibrate_cascade, evaluate_cascade, grouped_hits, label_indices, mean_std, run_experiment, run_horizon,
    train_cascade, ExperimentReport, Group, Hits, HorizonOutcome, HorizonResult, MeanStd, Summary,
};
pub use report::{from_csv, render_text, to_csv};
