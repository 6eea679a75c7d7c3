//! One-dimensional CNN on raw sensor windows.
//!
//! ```text
//! 128×6 ─conv(196 filters, kernel 16, stride 1, valid, ReLU)→ 113×196
//!       ─maxpool(4)→ 28×196 ─flatten→ 5488 ─dense(1024, ReLU)→ 1024
//!       ─dense(2, softmax)→ 2
//! ```
//!
//! Each filter spans all six channels. The convolution is computed as a
//! matrix product over unrolled patches: because windows are stored
//! time-major, the patch starting at time `t` is the contiguous slice
//! `[t*6, t*6 + 96)` of the window.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nn::{self, Dense, LossHistory, NetConfig, Parameters};
use super::window::{resample_to_window, RawWindow, WINDOW_CHANNELS, WINDOW_LEN};
use super::{check_both_classes, class_index, Prediction, Predictor};
use crate::error::{Error, Result};
use crate::signal::{Label, Segment};

pub const FILTERS: usize = 196;
pub const KERNEL: usize = 16;
pub const POOL: usize = 4;
pub const HIDDEN: usize = 1024;
pub const OUTPUTS: usize = 2;
pub const CONV_LEN: usize = WINDOW_LEN - KERNEL + 1;
pub const POOLED_LEN: usize = CONV_LEN / POOL;
pub const FLAT_LEN: usize = POOLED_LEN * FILTERS;
const PATCH: usize = KERNEL * WINDOW_CHANNELS;

/// Per-channel standardization learned from the training windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    pub mean: [f64; WINDOW_CHANNELS],
    pub std: [f64; WINDOW_CHANNELS],
}

impl ChannelScaler {
    pub fn identity() -> Self {
        ChannelScaler {
            mean: [0.0; WINDOW_CHANNELS],
            std: [1.0; WINDOW_CHANNELS],
        }
    }

    pub fn fit(windows: &[RawWindow]) -> Self {
        let mut sum = [0.0; WINDOW_CHANNELS];
        let mut sq = [0.0; WINDOW_CHANNELS];
        let n = (windows.len() * WINDOW_LEN) as f64;
        for w in windows {
            for row in w.data().rows() {
                for c in 0..WINDOW_CHANNELS {
                    sum[c] += row[c];
                }
            }
        }
        let mean = sum.map(|s| s / n);
        for w in windows {
            for row in w.data().rows() {
                for c in 0..WINDOW_CHANNELS {
                    sq[c] += (row[c] - mean[c]).powi(2);
                }
            }
        }
        let std = sq.map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        });
        ChannelScaler { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    /// Convolution as a `(KERNEL * 6) × FILTERS` matrix; row `k * 6 + c`
    /// holds the tap at offset `k` on channel `c`.
    pub conv: Dense,
    pub hidden: Dense,
    pub output: Dense,
    pub scaler: ChannelScaler,
}

struct Activations {
    patches: Array2<f64>,
    conv_pre: Array2<f64>,
    /// Row of `conv_pre` that won each pooled cell, `[batch][pooled index]`.
    argmax: Vec<usize>,
    pooled: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
    logits: Array2<f64>,
}

impl CnnModel {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CnnModel {
            conv: Dense::init(PATCH, FILTERS, &mut rng),
            hidden: Dense::init(FLAT_LEN, HIDDEN, &mut rng),
            output: Dense::init(HIDDEN, OUTPUTS, &mut rng),
            scaler: ChannelScaler::identity(),
        }
    }

    /// Shapes produced by each stage for a single window.
    pub fn shape_chain() -> [(usize, usize); 6] {
        [
            (WINDOW_LEN, WINDOW_CHANNELS),
            (CONV_LEN, FILTERS),
            (POOLED_LEN, FILTERS),
            (1, FLAT_LEN),
            (1, HIDDEN),
            (1, OUTPUTS),
        ]
    }

    pub fn train(windows: &[RawWindow], labels: &[Label], cfg: &NetConfig, seed: u64) -> Result<(Self, LossHistory)> {
        cfg.validate()?;
        if windows.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: windows.len(),
                got: labels.len(),
            });
        }
        check_both_classes(labels)?;
        let mut model = CnnModel::new(seed);
        model.scaler = ChannelScaler::fit(windows);
        let targets: Vec<usize> = labels.iter().map(|&l| class_index(l)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let history = nn::fit(&mut model, windows.len(), cfg, &mut rng, |m, idx, _| {
            let batch: Vec<&RawWindow> = idx.iter().map(|&i| &windows[i]).collect();
            let tb: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            m.loss_and_grad(&batch, &tb)
        });
        Ok((model, history))
    }

    fn patches(&self, windows: &[&RawWindow]) -> Array2<f64> {
        let mut p = Array2::zeros((windows.len() * CONV_LEN, PATCH));
        let mut scaled = vec![0.0; WINDOW_LEN * WINDOW_CHANNELS];
        for (b, w) in windows.iter().enumerate() {
            for (i, (&v, out)) in w.as_slice().iter().zip(scaled.iter_mut()).enumerate() {
                let c = i % WINDOW_CHANNELS;
                *out = (v - self.scaler.mean[c]) / self.scaler.std[c];
            }
            for t in 0..CONV_LEN {
                let row = p.row_mut(b * CONV_LEN + t).into_slice().expect("contiguous row");
                row.copy_from_slice(&scaled[t * WINDOW_CHANNELS..t * WINDOW_CHANNELS + PATCH]);
            }
        }
        p
    }

    fn forward(&self, windows: &[&RawWindow]) -> Activations {
        let batch = windows.len();
        let patches = self.patches(windows);
        let conv_pre = self.conv.forward(&patches);
        let mut pooled = Array2::zeros((batch, FLAT_LEN));
        let mut argmax = vec![0usize; batch * FLAT_LEN];
        for b in 0..batch {
            for j in 0..POOLED_LEN {
                for f in 0..FILTERS {
                    let mut best_row = b * CONV_LEN + j * POOL;
                    let mut best = conv_pre[[best_row, f]];
                    for t in 1..POOL {
                        let r = b * CONV_LEN + j * POOL + t;
                        if conv_pre[[r, f]] > best {
                            best = conv_pre[[r, f]];
                            best_row = r;
                        }
                    }
                    // max and ReLU commute
                    pooled[[b, j * FILTERS + f]] = best.max(0.0);
                    argmax[b * FLAT_LEN + j * FILTERS + f] = best_row;
                }
            }
        }
        let hidden_pre = self.hidden.forward(&pooled);
        let hidden = nn::relu(&hidden_pre);
        let logits = self.output.forward(&hidden);
        Activations {
            patches,
            conv_pre,
            argmax,
            pooled,
            hidden_pre,
            hidden,
            logits,
        }
    }

    /// Class probabilities per window (dorsiflexion first).
    pub fn probabilities(&self, windows: &[&RawWindow]) -> Array2<f64> {
        nn::softmax_rows(&self.forward(windows).logits)
    }

    pub fn loss(&self, windows: &[&RawWindow], targets: &[usize]) -> f64 {
        nn::softmax_cross_entropy(&self.forward(windows).logits, targets).0
    }

    /// Mean cross-entropy and gradients in [`CnnModel::parameters_mut`] order.
    pub fn loss_and_grad(&self, windows: &[&RawWindow], targets: &[usize]) -> (f64, Vec<Vec<f64>>) {
        let a = self.forward(windows);
        let (loss, dlogits) = nn::softmax_cross_entropy(&a.logits, targets);
        let (dw_out, db_out, dh) = self.output.backward(&a.hidden, &dlogits, true);
        let dh_pre = nn::relu_backward(dh.expect("requested"), &a.hidden_pre);
        let (dw_hidden, db_hidden, dpooled) = self.hidden.backward(&a.pooled, &dh_pre, true);
        let dpooled = dpooled.expect("requested");

        let mut dconv = Array2::<f64>::zeros(a.conv_pre.raw_dim());
        for b in 0..windows.len() {
            for idx in 0..FLAT_LEN {
                let row = a.argmax[b * FLAT_LEN + idx];
                let f = idx % FILTERS;
                if a.conv_pre[[row, f]] > 0.0 {
                    dconv[[row, f]] += dpooled[[b, idx]];
                }
            }
        }
        let (dw_conv, db_conv, _) = self.conv.backward(&a.patches, &dconv, false);
        let grads = vec![
            nn::flat(dw_conv),
            nn::flat1(db_conv),
            nn::flat(dw_hidden),
            nn::flat1(db_hidden),
            nn::flat(dw_out),
            nn::flat1(db_out),
        ];
        (loss, grads)
    }

    /// `[conv w, conv b, hidden w, hidden b, output w, output b]`, row-major.
    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(6);
        for layer in [&mut self.conv, &mut self.hidden, &mut self.output] {
            out.push(layer.w.as_slice_mut().expect("standard layout"));
            out.push(layer.b.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn predict_window(&self, w: &RawWindow) -> Prediction {
        let p: Array1<f64> = self.probabilities(&[w]).row(0).to_owned();
        Prediction {
            label: if p[0] >= 0.5 { Label::Dorsiflexion } else { Label::Other },
            score: p[0],
        }
    }
}

impl Parameters for CnnModel {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.parameters_mut()
    }
}

impl Predictor<RawWindow> for CnnModel {
    fn predict(&self, x: &RawWindow) -> Result<Prediction> {
        Ok(self.predict_window(x))
    }
}

impl Predictor<Segment> for CnnModel {
    fn predict(&self, x: &Segment) -> Result<Prediction> {
        Ok(self.predict_window(&resample_to_window(x)?))
    }
}
