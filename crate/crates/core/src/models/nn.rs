//! Building blocks shared by the two neural models: dense layers, softmax
//! cross-entropy, ADAM and the epoch loop with early stopping.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Training hyperparameters for the MLP and CNN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Drop probability of the dropout layer (MLP only).
    pub dropout: f64,
    /// Stop after this many epochs without a training-loss improvement of at
    /// least `min_improvement`.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            max_epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            dropout: 0.5,
            patience: 10,
            min_improvement: 1e-5,
        }
    }
}

impl NetConfig {
    pub(crate) fn validate(&self) -> crate::error::Result<()> {
        use crate::error::Error;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        Ok(())
    }
}

/// Fully connected layer computing `x · w + b` for row-major batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
        Dense {
            w,
            b: Array1::zeros(fan_out),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    /// Returns `(dw, db)` and, when asked, the gradient w.r.t. the input.
    pub fn backward(
        &self,
        x: &Array2<f64>,
        dout: &Array2<f64>,
        need_dx: bool,
    ) -> (Array2<f64>, Array1<f64>, Option<Array2<f64>>) {
        let dw = x.t().dot(dout);
        let db = dout.sum_axis(Axis(0));
        let dx = need_dx.then(|| dout.dot(&self.w.t()));
        (dw, db, dx)
    }
}

pub(crate) fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

/// Zeroes `grad` wherever the pre-activation was not positive.
pub(crate) fn relu_backward(mut grad: Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    ndarray::Zip::from(&mut grad).and(pre).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    grad
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    p
}

/// Mean cross-entropy of softmax outputs, and its gradient w.r.t. the logits.
pub(crate) fn softmax_cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let n = logits.nrows() as f64;
    let mut loss = 0.0;
    let mut grad = softmax_rows(logits);
    for (i, row) in logits.rows().into_iter().enumerate() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[targets[i]];
        grad[[i, targets[i]]] -= 1.0;
    }
    grad /= n;
    (loss / n, grad)
}

/// Inverted-dropout mask: kept units are scaled by `1 / (1 - p)`.
pub(crate) fn dropout_mask(shape: (usize, usize), p: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

pub(crate) fn flat(a: Array2<f64>) -> Vec<f64> {
    a.as_standard_layout().iter().copied().collect()
}

pub(crate) fn flat1(a: Array1<f64>) -> Vec<f64> {
    a.to_vec()
}

/// Models whose parameters can be updated tensor by tensor, in the same order
/// as the gradients they produce.
pub(crate) trait Parameters {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;
}

pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: &NetConfig) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[Vec<f64>]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let eps_hat = self.eps * c2.sqrt();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= step * m[i] / (v[i].sqrt() + eps_hat);
            }
        }
    }
}

/// Per-epoch mean training loss.
pub type LossHistory = Vec<f64>;

/// Mini-batch ADAM over `n` examples. `batch_step` returns the mean loss and
/// gradients of one batch (given as example indices).
pub(crate) fn fit<P, F>(model: &mut P, n: usize, cfg: &NetConfig, rng: &mut ChaCha8Rng, mut batch_step: F) -> LossHistory
where
    P: Parameters,
    F: FnMut(&P, &[usize], &mut ChaCha8Rng) -> (f64, Vec<Vec<f64>>),
{
    let mut adam = Adam::new(cfg);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = batch_step(model, batch, rng);
            total += loss * batch.len() as f64;
            adam.step(model.tensors_mut(), &grads);
        }
        let epoch_loss = total / n as f64;
        history.push(epoch_loss);
        if best - epoch_loss >= cfg.min_improvement {
            best = epoch_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    history
}
