//! Multilayer perceptron on selected features:
//! dense(128, ReLU) → dense(256, ReLU) → dropout → dense(2, softmax).

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{self, Dense, LossHistory, NetConfig, Parameters};
use super::{check_both_classes, class_index, Prediction, Predictor};
use crate::error::{Error, Result};
use crate::signal::Label;

pub const HIDDEN1: usize = 128;
pub const HIDDEN2: usize = 256;
pub const OUTPUTS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub hidden1: Dense,
    pub hidden2: Dense,
    pub output: Dense,
    pub dropout: f64,
}

struct Activations {
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2_dropped: Array2<f64>,
    logits: Array2<f64>,
}

impl MlpModel {
    pub fn new(input_dim: usize, dropout: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpModel {
            hidden1: Dense::init(input_dim, HIDDEN1, &mut rng),
            hidden2: Dense::init(HIDDEN1, HIDDEN2, &mut rng),
            output: Dense::init(HIDDEN2, OUTPUTS, &mut rng),
            dropout,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.hidden1.w.nrows()
    }

    pub fn train(features: &[Vec<f64>], labels: &[Label], cfg: &NetConfig, seed: u64) -> Result<(Self, LossHistory)> {
        cfg.validate()?;
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        check_both_classes(labels)?;
        let x = to_matrix(features)?;
        let targets: Vec<usize> = labels.iter().map(|&l| class_index(l)).collect();
        let mut model = MlpModel::new(x.ncols(), cfg.dropout, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let history = nn::fit(&mut model, x.nrows(), cfg, &mut rng, |m, idx, rng| {
            let xb = x.select(ndarray::Axis(0), idx);
            let tb: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let mask = (m.dropout > 0.0).then(|| nn::dropout_mask((idx.len(), HIDDEN2), m.dropout, rng));
            m.loss_and_grad(&xb, &tb, mask.as_ref())
        });
        Ok((model, history))
    }

    fn forward(&self, x: &Array2<f64>, mask: Option<&Array2<f64>>) -> Activations {
        let z1 = self.hidden1.forward(x);
        let h1 = nn::relu(&z1);
        let z2 = self.hidden2.forward(&h1);
        let mut h2_dropped = nn::relu(&z2);
        if let Some(m) = mask {
            h2_dropped *= m;
        }
        let logits = self.output.forward(&h2_dropped);
        Activations {
            z1,
            h1,
            z2,
            h2_dropped,
            logits,
        }
    }

    /// Class probabilities, one row per input row (dorsiflexion first).
    pub fn probabilities(&self, x: &Array2<f64>) -> Array2<f64> {
        nn::softmax_rows(&self.forward(x, None).logits)
    }

    /// Mean cross-entropy without dropout.
    pub fn loss(&self, x: &Array2<f64>, targets: &[usize]) -> f64 {
        nn::softmax_cross_entropy(&self.forward(x, None).logits, targets).0
    }

    /// Mean cross-entropy of a batch and its gradient for every parameter
    /// tensor, in [`MlpModel::parameters_mut`] order. `mask` is an optional
    /// dropout mask over the second hidden layer.
    pub fn loss_and_grad(&self, x: &Array2<f64>, targets: &[usize], mask: Option<&Array2<f64>>) -> (f64, Vec<Vec<f64>>) {
        let a = self.forward(x, mask);
        let (loss, dlogits) = nn::softmax_cross_entropy(&a.logits, targets);
        let (dw3, db3, dh2) = self.output.backward(&a.h2_dropped, &dlogits, true);
        let mut dh2 = dh2.expect("requested");
        if let Some(m) = mask {
            dh2 *= m;
        }
        let dz2 = nn::relu_backward(dh2, &a.z2);
        let (dw2, db2, dh1) = self.hidden2.backward(&a.h1, &dz2, true);
        let dz1 = nn::relu_backward(dh1.expect("requested"), &a.z1);
        let (dw1, db1, _) = self.hidden1.backward(x, &dz1, false);
        let grads = vec![
            nn::flat(dw1),
            nn::flat1(db1),
            nn::flat(dw2),
            nn::flat1(db2),
            nn::flat(dw3),
            nn::flat1(db3),
        ];
        (loss, grads)
    }

    /// Parameter tensors as flat row-major slices:
    /// `[w1, b1, w2, b2, w3, b3]`.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(6);
        for layer in [&mut self.hidden1, &mut self.hidden2, &mut self.output] {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

impl Parameters for MlpModel {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.parameters_mut()
    }
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Empty("no training rows".into()))?;
    let dim = first.len();
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: r.len(),
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((rows.len(), dim), flat).expect("checked shape"))
}

impl Predictor<[f64]> for MlpModel {
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("1 x d");
        let p = self.probabilities(&row);
        let pd = p[[0, 0]];
        Ok(Prediction {
            label: if pd >= 0.5 { Label::Dorsiflexion } else { Label::Other },
            score: pd,
        })
    }
}
