//! Load schema, shift classes, temporal splits and feature encoders.

pub mod cyclical;
pub mod quantile;
pub mod record;
pub mod schema;
pub mod shift;
pub mod split;

pub use cyclical::{cyclical_encode, TemporalComponent};
pub use quantile::QuantileNormalizer;
pub use record::{read_records, read_records_path, write_records, write_records_path, LoadRecord, Topology};
pub use schema::{BuildingSource, EncodedMatrix, FeatureSchema, SchemaOptions, Stage};
pub use shift::{derive_shift_class, record_shift_class, ShiftClass};
pub use split::{temporal_split, DataSplits};
