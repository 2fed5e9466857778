//! Change-point detection and statistical validation for continuous
//! benchmarking data.
//!
//! Measurements are stored per series, split hierarchically with E-Divisive
//! Means, filtered by permutation p-value and relative magnitude, and rendered
//! as markdown reports and SVG plots.

pub mod edivisive;
pub mod ingest;
pub mod model;
pub mod report;
pub mod simulate;
pub mod stats;
pub mod store;

pub use edivisive::{detect, ChangePoint, DetectError, DetectionConfig};
pub use model::{
    append_point, make_series_key, CommitId, MeasurementPoint, ModelError, Series, SeriesKey,
    Trigger,
};
