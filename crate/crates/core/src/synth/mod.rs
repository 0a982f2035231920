//! Synthetic load datasets with latent shift rules.
//!
//! Every (day, building, sort) cell carries a latent utilization. Planned
//! workload features are read off it, and loads in cells whose utilization
//! exceeds capacity (plus per-load noise) are redirected to the least
//! utilized building of the cluster. Independently, each load's true arrival
//! time scatters around the time planned a week ahead; arriving after the
//! planned sort's cutoff rolls it into the next sort.

pub mod config;
pub mod generate;
pub mod summary;

pub use config::{GeneratorConfig, SortWindow};
pub use generate::{generate, lateness_probability, LatentPlan};
pub use summary::{summarize, DistributionSummary};
