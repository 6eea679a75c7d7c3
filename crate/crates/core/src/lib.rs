//! Recognition of wrist dorsiflexion from phone inertial data, and the
//! adaptive difficulty logic of a shake-based rehabilitation game.
//!
//! The pipeline runs from raw 6-axis samples ([`signal`], [`ingest`]) through
//! 42 statistical descriptors ([`features`]) and mRMR selection
//! ([`selection`]) to four classifiers ([`models`]), evaluated subject-wise
//! ([`eval`]). [`adaptive`] turns the range-of-motion and speed indicators
//! into self-adjusting thresholds, and [`corpus`] generates synthetic labeled
//! data for every stage.

pub mod adaptive;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod models;
pub mod selection;
pub mod signal;

pub use error::{Error, Result};
pub use features::{FeatureVector, Normalizer};
pub use ingest::{Annotation, Dataset};
pub use models::{ModelArtifact, ModelKind, Prediction, Predictor};
pub use signal::{Label, Segment, SensorSample, SynthesisParams};
