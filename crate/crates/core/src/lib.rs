//! Bottom-k cardinality sketches with estimators that stay accurate under
//! adaptive queries.
//!
//! [`sketch`] builds and merges bottom-k sketches over a keyed priority
//! function. [`estimators`] answers cardinality queries through a noisy
//! threshold sweep, optionally tracking per-key participation in a
//! [`dp::ChargeLedger`]. [`workload`] and [`attack`] generate query streams,
//! and [`experiment`] measures how many queries the tracking estimator
//! answers before its sketch entries run out of budget.

pub mod attack;
pub mod cli;
pub mod dp;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod seed;
pub mod sketch;
pub mod workload;

pub use dp::{above_threshold, privacy_bounds, ChargeLedger, NoiseStream, PrivacyBounds, Variant};
pub use error::{Error, Result};
pub use estimators::{
    robust_estimate, tracking_estimate, EstimatorConfig, EstimatorSpec, NoiseCalibration,
    Responder, TrackingDiagnostics,
};
pub use sketch::{
    merge, sketch_set, std_estimate, BottomKSketch, CardinalityEstimate, Key, SketchRandomness,
};
