use serde::{Deserialize, Serialize};

use super::{Prediction, Predictor};
use crate::error::{Error, Result};
use crate::signal::Label;

/// k-nearest-neighbour classifier under Euclidean distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl KnnModel {
    pub fn train(features: &[Vec<f64>], labels: &[Label], k: usize) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Empty("k-NN needs at least one training vector".into()));
        }
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let dim = features[0].len();
        if let Some(r) = features.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        Ok(KnnModel {
            k,
            points: features.to_vec(),
            labels: labels.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

impl Predictor<[f64]> for KnnModel {
    /// Majority label of the k nearest points. Distance ties go to the lower
    /// training index; a split vote goes to the nearest point's label.
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut order: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        let k = self.k.min(order.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
        }
        let nearest = &mut order[..k];
        nearest.sort_unstable_by(cmp);

        let dorsi = nearest
            .iter()
            .filter(|(_, i)| self.labels[*i] == Label::Dorsiflexion)
            .count();
        let other = k - dorsi;
        let label = match dorsi.cmp(&other) {
            std::cmp::Ordering::Greater => Label::Dorsiflexion,
            std::cmp::Ordering::Less => Label::Other,
            std::cmp::Ordering::Equal => self.labels[nearest[0].1],
        };
        Ok(Prediction {
            label,
            score: dorsi as f64 / k as f64,
        })
    }
}
