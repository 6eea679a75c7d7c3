//! Trainable classifiers sharing one prediction contract.

pub mod artifact;
pub mod cnn;
pub mod knn;
pub mod mlp;
pub mod nn;
pub mod svm;
pub mod window;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::signal::Label;

pub use artifact::{load, save, FeaturePipeline, ModelArtifact, ModelKind, ModelParams, TrainOptions, FORMAT_VERSION};
pub use nn::NetConfig;

/// A predicted label with a model-specific confidence score: vote fraction
/// for k-NN, signed margin for the SVM, dorsiflexion probability for the
/// networks. Larger scores always lean towards dorsiflexion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

pub trait Predictor<X: ?Sized> {
    fn predict(&self, x: &X) -> Result<Prediction>;
}

impl<X: ?Sized, P: Predictor<X> + ?Sized> Predictor<X> for &P {
    fn predict(&self, x: &X) -> Result<Prediction> {
        (**self).predict(x)
    }
}

/// Index of a label in two-way network outputs.
pub(crate) fn class_index(label: Label) -> usize {
    match label {
        Label::Dorsiflexion => 0,
        Label::Other => 1,
    }
}

pub(crate) fn check_both_classes(labels: &[Label]) -> Result<()> {
    let has = |l| labels.contains(&l);
    if has(Label::Dorsiflexion) && has(Label::Other) {
        Ok(())
    } else {
        Err(crate::error::Error::SingleClass)
    }
}
