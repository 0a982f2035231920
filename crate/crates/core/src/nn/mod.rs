//! Minimal dense-network toolkit: layers, loss, optimizer and the
//! assembled tabular classifier.

pub mod adam;
pub mod backbone;
pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod norm;
pub mod param;

pub use adam::{AdamConfig, AdamState};
pub use backbone::{Backbone, BackboneRegistry, BackboneSpec};
pub use checkpoint::Checkpoint;
pub use network::{Network, NetworkSpec, Registries};
pub use param::{Param, Parameterized};
