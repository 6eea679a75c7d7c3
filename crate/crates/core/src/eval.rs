//! Confusion matrices, per-class and macro-averaged metrics, leave-one-out
//! cross-validation and subject-wise test evaluation.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelArtifact, Predictor};
use crate::signal::{Label, Segment};

/// Binary confusion matrix with dorsiflexion as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let mut cm = ConfusionMatrix::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p);
        }
        Ok(cm)
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth.is_dorsiflexion(), predicted.is_dorsiflexion()) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// The same counts seen with the other class as positive.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

/// `num / den`, with 0/0 defined as 0.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Rounds half away from zero to three decimals, the precision of printed
/// tables. A tiny guard absorbs binary representation error so that values
/// such as 0.9625 round up.
pub fn round3(x: f64) -> f64 {
    let guard = 1e-9;
    let scaled = x.abs() * 1000.0;
    (scaled + 0.5 + guard).floor().copysign(x) / 1000.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl ClassMetrics {
    /// Metrics of the positive class of `cm`.
    pub fn positive(cm: &ConfusionMatrix) -> Self {
        let precision = ratio(cm.tp, cm.tp + cm.fp);
        let recall = ratio(cm.tp, cm.tp + cm.fn_);
        ClassMetrics {
            precision,
            recall,
            f_score: f_score(precision, recall),
        }
    }

    /// Arithmetic mean of two classes, field by field.
    pub fn macro_average(a: &ClassMetrics, b: &ClassMetrics) -> Self {
        ClassMetrics {
            precision: (a.precision + b.precision) / 2.0,
            recall: (a.recall + b.recall) / 2.0,
            f_score: (a.f_score + b.f_score) / 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub overall: ClassMetrics,
    pub dorsiflexion: ClassMetrics,
    pub other: ClassMetrics,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    if cm.total() == 0 {
        return Err(Error::Empty("confusion matrix has no entries".into()));
    }
    let dorsiflexion = ClassMetrics::positive(cm);
    let other = ClassMetrics::positive(&cm.swapped());
    Ok(MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
        overall: ClassMetrics::macro_average(&dorsiflexion, &other),
        dorsiflexion,
        other,
    })
}

impl MetricsReport {
    fn rows(&self) -> [(&'static str, &'static str, f64); 10] {
        [
            ("overall", "accuracy", self.accuracy),
            ("overall", "precision", self.overall.precision),
            ("overall", "recall", self.overall.recall),
            ("overall", "f_score", self.overall.f_score),
            ("dorsiflexion", "precision", self.dorsiflexion.precision),
            ("dorsiflexion", "recall", self.dorsiflexion.recall),
            ("dorsiflexion", "f_score", self.dorsiflexion.f_score),
            ("non_dorsiflexion", "precision", self.other.precision),
            ("non_dorsiflexion", "recall", self.other.recall),
            ("non_dorsiflexion", "f_score", self.other.f_score),
        ]
    }
}

/// Headline numbers printed elsewhere for the same confusion matrix, to be
/// checked against what the counts actually give.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportedMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discrepancy {
    pub metric: &'static str,
    pub computed: f64,
    pub reported: f64,
}

/// Compares the dorsiflexion-class metrics (and accuracy) computed from
/// counts with reported values at three-decimal precision.
pub fn discrepancies(report: &MetricsReport, reported: &ReportedMetrics) -> Vec<Discrepancy> {
    [
        ("accuracy", report.accuracy, reported.accuracy),
        ("precision", report.dorsiflexion.precision, reported.precision),
        ("recall", report.dorsiflexion.recall, reported.recall),
        ("f_score", report.dorsiflexion.f_score, reported.f_score),
    ]
    .into_iter()
    .filter(|&(_, c, r)| (round3(c) - round3(r)).abs() > 5e-4)
    .map(|(metric, computed, reported)| Discrepancy {
        metric,
        computed,
        reported,
    })
    .collect()
}

/// A confusion matrix together with everything derived from it.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub title: String,
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
    pub discrepancies: Vec<Discrepancy>,
}

impl Evaluation {
    pub fn from_confusion(title: impl Into<String>, confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Evaluation {
            title: title.into(),
            report: metrics(&confusion)?,
            confusion,
            discrepancies: Vec::new(),
        })
    }

    pub fn check_reported(mut self, reported: &ReportedMetrics) -> Self {
        self.discrepancies = discrepancies(&self.report, reported);
        self
    }

    /// Aligned plain-text table: overall block, then one block per class,
    /// values to three decimals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let cm = &self.confusion;
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(out, "confusion (dorsiflexion positive): tp={} fp={} fn={} tn={}", cm.tp, cm.fp, cm.fn_, cm.tn);
        let _ = writeln!(out);
        let mut last = "";
        for (block, metric, value) in self.report.rows() {
            let shown = if block == last { "" } else { block };
            last = block;
            let _ = writeln!(out, "{shown:<18}{metric:<11}{:.3}", round3(value));
        }
        for d in &self.discrepancies {
            let _ = writeln!(
                out,
                "DISCREPANCY {}: computed from counts {:.3}, reported {:.3}",
                d.metric,
                round3(d.computed),
                round3(d.reported)
            );
        }
        out
    }

    /// `block,metric,value` rows with full precision, then confusion counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,metric,value\n");
        for (block, metric, value) in self.report.rows() {
            let _ = writeln!(out, "{block},{metric},{value}");
        }
        let cm = &self.confusion;
        for (name, v) in [("tp", cm.tp), ("fp", cm.fp), ("fn", cm.fn_), ("tn", cm.tn)] {
            let _ = writeln!(out, "confusion,{name},{v}");
        }
        for d in &self.discrepancies {
            let _ = writeln!(out, "discrepancy,{},{}", d.metric, d.reported);
        }
        out
    }

    pub fn write(&self, text_path: &Path, csv_path: &Path) -> Result<()> {
        fs::write(text_path, self.to_text())?;
        fs::write(csv_path, self.to_csv())?;
        Ok(())
    }
}

fn loocv_with<X, P, F, G>(items: &[X], labels: &[Label], trainer: F, predict: G) -> Result<f64>
where
    X: Clone + Sync,
    F: Fn(&[X], &[Label]) -> Result<P> + Sync,
    G: Fn(&P, &X) -> Result<crate::models::Prediction> + Sync,
{
    if items.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: items.len(),
            got: labels.len(),
        });
    }
    if items.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: items.len(),
        });
    }
    let correct = (0..items.len())
        .into_par_iter()
        .map(|held| {
            let train: Vec<X> = items
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != held)
                .map(|(_, x)| x.clone())
                .collect();
            let y: Vec<Label> = labels
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != held)
                .map(|(_, &l)| l)
                .collect();
            let model = trainer(&train, &y)?;
            Ok(usize::from(predict(&model, &items[held])?.label == labels[held]))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / items.len() as f64)
}

/// Leave-one-out accuracy over feature rows. Folds run in parallel.
pub fn loocv<P, F>(rows: &[Vec<f64>], labels: &[Label], trainer: F) -> Result<f64>
where
    P: Predictor<[f64]>,
    F: Fn(&[Vec<f64>], &[Label]) -> Result<P> + Sync,
{
    loocv_with(rows, labels, trainer, |m: &P, x: &Vec<f64>| m.predict(x))
}

/// Leave-one-out accuracy over whole segments, for trainers that do their
/// own feature extraction. The segment's label is the target.
pub fn loocv_segments<P, F>(segments: &[&Segment], trainer: F) -> Result<f64>
where
    P: Predictor<Segment>,
    F: Fn(&[&Segment], &[Label]) -> Result<P> + Sync,
{
    let labels: Vec<Label> = segments.iter().map(|s| s.label()).collect();
    loocv_with(segments, &labels, trainer, |m: &P, s: &&Segment| m.predict(*s))
}

/// Confusion matrix of any segment classifier on labeled segments.
pub fn confusion<P: Predictor<Segment> + Sync>(model: &P, segments: &[&Segment]) -> Result<ConfusionMatrix> {
    let predicted = segments
        .par_iter()
        .map(|s| model.predict(*s).map(|p| p.label))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<Label> = segments.iter().map(|s| s.label()).collect();
    ConfusionMatrix::from_labels(&truth, &predicted)
}

/// Evaluates a trained artifact on held-out segments, refusing test data
/// from any subject the model was trained on.
pub fn evaluate_split(model: &ModelArtifact, test: &[&Segment]) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Empty("no test segments".into()));
    }
    let trained: BTreeSet<&str> = model.training_subjects.iter().map(String::as_str).collect();
    if let Some(s) = test.iter().find(|s| trained.contains(s.subject_id())) {
        return Err(Error::SubjectOverlap(s.subject_id().to_string()));
    }
    let cm = confusion(model, test)?;
    Evaluation::from_confusion(format!("model: {}  test segments: {}", model.kind().name(), test.len()), cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::knn::KnnModel;
    use crate::models::Prediction;
    use Label::{Dorsiflexion as D, Other as O};

    #[test]
    fn round3_is_half_up() {
        assert_eq!(round3(0.9625), 0.963);
        assert_eq!(round3(0.9705), 0.971);
        assert_eq!(round3(0.9624999), 0.962);
        assert_eq!(round3(-0.0015), -0.002);
        assert_eq!(round3(1.0), 1.0);
    }

    #[test]
    fn zero_over_zero_is_zero() {
        let r = metrics(&ConfusionMatrix::new(0, 0, 0, 5)).unwrap();
        assert_eq!(r.dorsiflexion, ClassMetrics::default());
        assert_eq!(r.accuracy, 1.0);
        assert!(metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn perfect_and_all_positive_classifiers() {
        let r = metrics(&ConfusionMatrix::new(4, 0, 0, 6)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.overall, ClassMetrics { precision: 1.0, recall: 1.0, f_score: 1.0 });
        let r = metrics(&ConfusionMatrix::new(5, 5, 0, 0)).unwrap();
        assert_eq!(r.dorsiflexion.recall, 1.0);
        assert_eq!(r.dorsiflexion.precision, 0.5);
    }

    #[test]
    fn swapping_exchanges_class_blocks() {
        let cm = ConfusionMatrix::new(7, 2, 3, 11);
        let (a, b) = (metrics(&cm).unwrap(), metrics(&cm.swapped()).unwrap());
        assert_eq!(a.dorsiflexion, b.other);
        assert_eq!(a.other, b.dorsiflexion);
        assert_eq!(a.accuracy, b.accuracy);
    }

    #[test]
    fn text_report_has_three_decimals_and_flags() {
        let e = Evaluation::from_confusion("x", ConfusionMatrix::new(1, 1, 1, 1))
            .unwrap()
            .check_reported(&ReportedMetrics { accuracy: 0.5, precision: 0.5, recall: 0.9, f_score: 0.5 });
        let text = e.to_text();
        assert!(text.contains("accuracy   0.500"));
        assert!(text.contains("DISCREPANCY recall"));
        assert_eq!(e.discrepancies.len(), 1);
        assert!(e.to_csv().starts_with("block,metric,value\noverall,accuracy,0.5\n"));
    }

    struct Majority(Label);

    impl Predictor<[f64]> for Majority {
        fn predict(&self, _: &[f64]) -> Result<Prediction> {
            Ok(Prediction { label: self.0, score: 0.0 })
        }
    }

    fn majority(_: &[Vec<f64>], y: &[Label]) -> Result<Majority> {
        let d = y.iter().filter(|l| l.is_dorsiflexion()).count();
        Ok(Majority(if 2 * d >= y.len() { D } else { O }))
    }

    #[test]
    fn loocv_examples() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        assert_eq!(loocv(&rows, &[D; 5], majority).unwrap(), 1.0);

        let knn = |x: &[Vec<f64>], y: &[Label]| KnnModel::train(x, y, 1);
        // the single remaining neighbor always carries the other label
        assert_eq!(loocv(&[vec![0.0], vec![1.0]], &[D, O], knn).unwrap(), 0.0);

        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 + if i < 5 { 0.0 } else { 100.0 }]).collect();
        let labels: Vec<Label> = (0..10).map(|i| if i < 5 { D } else { O }).collect();
        assert_eq!(loocv(&rows, &labels, knn).unwrap(), 1.0);
    }
}
