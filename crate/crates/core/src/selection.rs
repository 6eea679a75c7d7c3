//! Minimum-redundancy maximum-relevance feature selection.
//!
//! Relevance is the two-group ANOVA F statistic of a feature against the
//! binary label; redundancy is the mean absolute Pearson correlation with the
//! features already picked. The default combination is the quotient
//! `F / max(ε, redundancy)`; the difference `F - redundancy` is available for
//! comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::loocv;
use crate::features::{feature_index_by_name, FEATURE_NAMES};
use crate::models::Predictor;
use crate::signal::Label;

/// F value reported when the within-group sum of squares is zero but the
/// group means differ (perfect separation).
pub const F_MAX: f64 = 1e12;

/// Floor on the redundancy denominator of the quotient score.
pub const REDUNDANCY_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scoring {
    #[default]
    Quotient,
    Difference,
}

impl Scoring {
    fn combine(self, relevance: f64, redundancy: f64) -> f64 {
        match self {
            Scoring::Quotient => relevance / redundancy.max(REDUNDANCY_EPS),
            Scoring::Difference => relevance - redundancy,
        }
    }
}

pub fn f_statistic(column: &[f64], labels: &[Label]) -> Result<f64> {
    if column.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: column.len(),
        });
    }
    let (mut sum, mut count) = ([0.0f64; 2], [0usize; 2]);
    for (&x, &y) in column.iter().zip(labels) {
        let g = y as usize;
        sum[g] += x;
        count[g] += 1;
    }
    if count.contains(&0) {
        return Err(Error::SingleClass);
    }
    let n = column.len() as f64;
    let group_mean = [sum[0] / count[0] as f64, sum[1] / count[1] as f64];
    let grand_mean = (sum[0] + sum[1]) / n;

    let ss_between: f64 = (0..2)
        .map(|g| count[g] as f64 * (group_mean[g] - grand_mean).powi(2))
        .sum();
    let ss_within: f64 = column
        .iter()
        .zip(labels)
        .map(|(&x, &y)| (x - group_mean[y as usize]).powi(2))
        .sum();

    if ss_between == 0.0 {
        return Ok(0.0);
    }
    if ss_within == 0.0 {
        return Ok(F_MAX);
    }
    // df_between = g - 1 = 1, df_within = n - 2
    Ok(((ss_between / 1.0) / (ss_within / (n - 2.0))).min(F_MAX))
}

/// Pearson correlation; 0 when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: a.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub ranked_indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub k: usize,
}

impl SelectionResult {
    /// Canonical names of the selected features, in rank order. Only
    /// meaningful when the columns are the 42 segment descriptors.
    pub fn names(&self) -> Vec<&'static str> {
        self.ranked_indices
            .iter()
            .map(|&i| FEATURE_NAMES.get(i).copied().unwrap_or("?"))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.names().join("\n");
        s.push('\n');
        s
    }

    /// Parses a rank-ordered list of feature names (one per line).
    pub fn indices_from_text(text: &str) -> Result<Vec<usize>> {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|name| {
                feature_index_by_name(name)
                    .ok_or_else(|| Error::invalid(format!("unknown feature name `{name}`")))
            })
            .collect()
    }
}

fn columns(rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let dim = rows
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Empty("feature matrix has no rows".into()))?;
    if let Some(r) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: r.len(),
        });
    }
    Ok((0..dim)
        .map(|j| rows.iter().map(|r| r[j]).collect())
        .collect())
}

/// Greedy mRMR over the columns of `rows`. The first pick maximizes
/// relevance; later picks maximize the combined score. Ties go to the lowest
/// feature index.
pub fn mrmr_select(
    rows: &[Vec<f64>],
    labels: &[Label],
    k: usize,
    scoring: Scoring,
) -> Result<SelectionResult> {
    if rows.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: rows.len(),
        });
    }
    let cols = columns(rows)?;
    let dim = cols.len();
    if k == 0 || k > dim {
        return Err(Error::invalid(format!("k must lie in 1..={dim}, got {k}")));
    }
    let relevance = cols
        .iter()
        .map(|c| f_statistic(c, labels))
        .collect::<Result<Vec<f64>>>()?;

    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut scores = Vec::with_capacity(k);
    let mut is_selected = vec![false; dim];
    // Running sum of |r| between each candidate and the selected set.
    let mut redundancy_sum = vec![0.0f64; dim];

    for step in 0..k {
        let mut best: Option<(usize, f64)> = None;
        for j in (0..dim).filter(|&j| !is_selected[j]) {
            let score = if step == 0 {
                relevance[j]
            } else {
                scoring.combine(relevance[j], redundancy_sum[j] / step as f64)
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let (pick, score) = best.expect("k <= dim leaves a candidate");
        selected.push(pick);
        scores.push(score);
        is_selected[pick] = true;
        for j in (0..dim).filter(|&j| !is_selected[j]) {
            redundancy_sum[j] += pearson(&cols[j], &cols[pick])?.abs();
        }
    }
    Ok(SelectionResult {
        ranked_indices: selected,
        scores,
        k,
    })
}

/// Keeps the given columns of each row, in the given order.
pub fn project(rows: &[Vec<f64>], indices: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| indices.iter().map(|&i| r[i]).collect())
        .collect()
}

/// Outcome of the number-of-features search.
#[derive(Clone, Debug, PartialEq)]
pub struct KChoice {
    pub k: usize,
    /// LOOCV accuracy for k = 1, 2, ...
    pub accuracies: Vec<f64>,
    pub selection: SelectionResult,
}

/// Ranks all features once with mRMR, then scores every prefix length by
/// leave-one-out accuracy of the model built by `factory`. Returns the
/// smallest k reaching the best accuracy.
pub fn choose_k<P, F>(rows: &[Vec<f64>], labels: &[Label], scoring: Scoring, factory: F) -> Result<KChoice>
where
    P: Predictor<[f64]>,
    F: Fn(&[Vec<f64>], &[Label]) -> Result<P> + Sync,
{
    if rows.is_empty() {
        return Err(Error::Empty("no rows to choose k from".into()));
    }
    let dim = rows[0].len();
    let selection = mrmr_select(rows, labels, dim, scoring)?;
    let accuracies = (1..=dim)
        .into_par_iter()
        .map(|k| {
            let sub = project(rows, &selection.ranked_indices[..k]);
            loocv(&sub, labels, |x: &[Vec<f64>], y: &[Label]| factory(x, y))
        })
        .collect::<Result<Vec<f64>>>()?;
    let best = accuracies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let k = accuracies.iter().position(|&a| a == best).unwrap_or(0) + 1;
    Ok(KChoice {
        k,
        accuracies,
        selection,
    })
}
