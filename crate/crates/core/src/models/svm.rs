//! Linear SVM trained by stochastic subgradient descent on the L2-regularized
//! hinge loss (Pegasos step size `1 / (λ t)`).
//!
//! The bias is learned as an extra weight on a constant input of 1 and is
//! regularized with the rest of the weights.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_both_classes, Prediction, Predictor};
use crate::error::{Error, Result};
use crate::signal::Label;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-3,
            epochs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sign_of(label: Label) -> f64 {
    if label.is_dorsiflexion() {
        1.0
    } else {
        -1.0
    }
}

impl SvmModel {
    pub fn train(features: &[Vec<f64>], labels: &[Label], config: &SvmConfig, seed: u64) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        check_both_classes(labels)?;
        if !(config.lambda > 0.0 && config.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be > 0, got {}", config.lambda)));
        }
        let dim = features[0].len();
        if let Some(r) = features.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }

        let lambda = config.lambda;
        // w[dim] is the bias weight on the constant input.
        let mut w = vec![0.0; dim + 1];
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let radius = 1.0 / lambda.sqrt();
        let mut t = 0u64;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let x = &features[i];
                let y = sign_of(labels[i]);
                let margin = y * (x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[dim]);
                let shrink = 1.0 - eta * lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, xj) in w.iter_mut().zip(x) {
                        *wj += eta * y * xj;
                    }
                    w[dim] += eta * y;
                }
                // Optional Pegasos projection onto the ball of radius 1/sqrt(λ).
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        let bias = w.pop().unwrap_or(0.0);
        Ok(SvmModel { weights: w, bias })
    }

    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }
}

impl Predictor<[f64]> for SvmModel {
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let m = self.margin(x)?;
        Ok(Prediction {
            label: if m >= 0.0 { Label::Dorsiflexion } else { Label::Other },
            score: m,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use Label::{Dorsiflexion as A, Other as B};

    #[test]
    fn two_point_separable() {
        let m = SvmModel::train(&[vec![-1.0], vec![1.0]], &[B, A], &SvmConfig::default(), 1).unwrap();
        let neg = m.predict(&[-1.0]).unwrap();
        let pos = m.predict(&[1.0]).unwrap();
        assert_eq!((neg.label, pos.label), (B, A));
        assert!(neg.score < 0.0 && pos.score > 0.0);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            SvmModel::train(&[vec![0.0], vec![1.0]], &[A, A], &SvmConfig::default(), 0),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin(), (i as f64).cos()]).collect();
        let ys: Vec<Label> = (0..20).map(|i| if i % 2 == 0 { A } else { B }).collect();
        let cfg = SvmConfig { epochs: 20, ..Default::default() };
        assert_eq!(SvmModel::train(&xs, &ys, &cfg, 4).unwrap(), SvmModel::train(&xs, &ys, &cfg, 4).unwrap());
    }

    fn blobs(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let pos = i % 2 == 0;
            let c = if pos { 1.0 } else { -1.0 };
            xs.push(vec![c + rng.random_range(-0.6..0.6), 0.5 * c + rng.random_range(-0.6..0.6)]);
            ys.push(if pos { A } else { B });
        }
        (xs, ys)
    }

    #[test]
    fn input_scaling_with_rescaled_lambda_keeps_labels() {
        // x -> c x with λ -> λ c² leaves the hinge objective invariant up to
        // the bias input, so predictions should agree.
        let (xs, ys) = blobs(11, 80);
        let (probe, _) = blobs(12, 60);
        let base = SvmConfig { lambda: 1e-2, epochs: 100 };
        let m = SvmModel::train(&xs, &ys, &base, 5).unwrap();
        for c in [0.5, 2.0, 4.0] {
            let scaled: Vec<Vec<f64>> = xs.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
            let cfg = SvmConfig { lambda: base.lambda * c * c, ..base };
            let mc = SvmModel::train(&scaled, &ys, &cfg, 5).unwrap();
            for p in &probe {
                let q: Vec<f64> = p.iter().map(|v| v * c).collect();
                assert_eq!(m.predict(p).unwrap().label, mc.predict(&q).unwrap().label, "c={c} p={p:?}");
            }
        }
    }
}
