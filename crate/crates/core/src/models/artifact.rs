//! Trained model bundles: the classifier plus everything needed to turn a
//! segment into its input, and the on-disk container.
//!
//! Container layout (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  "DFXMODEL"
//! format_version   u32
//! kind             u8       0 knn, 1 svm, 2 mlp, 3 cnn
//! subjects         u32 count, then per subject: u32 byte length + UTF-8
//! pipeline         u8 flag; when 1:
//!                    u32 dim, f64 mins[dim], f64 maxs[dim],
//!                    u32 count, then per selected feature:
//!                    u32 index, u32 name length, name bytes
//! shape header     u32 count, u64 values[count]   (kind specific)
//! payload          u64 count, f64 values[count]   (kind specific)
//! checksum         u64 FNV-1a of every preceding byte
//! ```
//!
//! Shape header and payload per kind:
//!
//! * knn: `[k, points, dim]`; points row-major, then one label per point
//!   (1.0 dorsiflexion, 0.0 other);
//! * svm: `[dim]`; weights, then bias;
//! * mlp: `[input, 128, 256, 2]`; dropout, then `w1 b1 w2 b2 w3 b3`;
//! * cnn: `[128, 6, 196, 16, 4, 1024, 2]`; channel means, channel stds, then
//!   `conv_w conv_b hidden_w hidden_b out_w out_b`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cnn::{self, ChannelScaler, CnnModel};
use super::knn::KnnModel;
use super::mlp::{self, MlpModel};
use super::nn::{Dense, NetConfig};
use super::svm::{SvmConfig, SvmModel};
use super::window::{resample_to_window, RawWindow, WINDOW_CHANNELS, WINDOW_LEN};
use super::{Prediction, Predictor};
use crate::error::{Error, Result};
use crate::features::{extract, extract_all, Normalizer, FEATURE_COUNT, FEATURE_NAMES};
use crate::selection::{choose_k, mrmr_select, project, Scoring};
use crate::signal::{Label, Segment};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"DFXMODEL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Knn,
    Svm,
    Mlp,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Knn, ModelKind::Svm, ModelKind::Mlp, ModelKind::Cnn];

    fn tag(self) -> u8 {
        match self {
            ModelKind::Knn => 0,
            ModelKind::Svm => 1,
            ModelKind::Mlp => 2,
            ModelKind::Cnn => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::CorruptModel(format!("unknown model kind tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Svm => "svm",
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
        }
    }

    pub fn uses_features(self) -> bool {
        self != ModelKind::Cnn
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown model kind `{s}` (expected knn, svm, mlp or cnn)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Knn(KnnModel),
    Svm(SvmModel),
    Mlp(MlpModel),
    Cnn(CnnModel),
}

/// Turns a segment into the normalized, selected feature vector a
/// feature-based model consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub normalizer: Normalizer,
    pub selected: Vec<usize>,
}

impl FeaturePipeline {
    pub fn transform(&self, segment: &Segment) -> Result<Vec<f64>> {
        let fv = extract(segment)?;
        let normalized = self.normalizer.apply(fv.as_slice())?;
        Ok(self.selected.iter().map(|&i| normalized[i]).collect())
    }

    pub fn selected_names(&self) -> Vec<&'static str> {
        self.selected.iter().map(|&i| FEATURE_NAMES[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub params: ModelParams,
    /// Present for every kind except the CNN.
    pub pipeline: Option<FeaturePipeline>,
    pub training_subjects: Vec<String>,
    pub format_version: u32,
}

/// How to train a [`ModelArtifact`] from labeled segments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub kind: ModelKind,
    /// Number of mRMR features; `None` searches all k by LOOCV. Written as
    /// an integer or `"auto"`.
    #[serde(with = "k_features_serde")]
    pub k_features: Option<usize>,
    pub knn_neighbors: usize,
    pub scoring: Scoring,
    pub svm: SvmConfig,
    pub mlp: NetConfig,
    pub cnn: NetConfig,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            kind: ModelKind::Cnn,
            k_features: Some(21),
            knn_neighbors: 1,
            scoring: Scoring::Quotient,
            svm: SvmConfig::default(),
            mlp: NetConfig::default(),
            cnn: NetConfig::default(),
            seed: 0,
        }
    }
}

mod k_features_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Fixed(usize),
        Named(String),
    }

    pub fn serialize<S: Serializer>(k: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match k {
            Some(k) => Repr::Fixed(*k),
            None => Repr::Named("auto".into()),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Fixed(k) => Ok(Some(k)),
            Repr::Named(s) if s == "auto" => Ok(None),
            Repr::Named(s) => Err(serde::de::Error::custom(format!("k_features must be an integer or \"auto\", got `{s}`"))),
        }
    }
}

fn train_on_features(opts: &TrainOptions, x: &[Vec<f64>], y: &[Label]) -> Result<ModelParams> {
    Ok(match opts.kind {
        ModelKind::Knn => ModelParams::Knn(KnnModel::train(x, y, opts.knn_neighbors)?),
        ModelKind::Svm => ModelParams::Svm(SvmModel::train(x, y, &opts.svm, opts.seed)?),
        ModelKind::Mlp => ModelParams::Mlp(MlpModel::train(x, y, &opts.mlp, opts.seed)?.0),
        ModelKind::Cnn => unreachable!("the CNN consumes raw windows"),
    })
}

impl Predictor<[f64]> for ModelParams {
    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        match self {
            ModelParams::Knn(m) => m.predict(x),
            ModelParams::Svm(m) => m.predict(x),
            ModelParams::Mlp(m) => m.predict(x),
            ModelParams::Cnn(_) => Err(Error::invalid("the CNN predicts from raw windows, not feature vectors")),
        }
    }
}

impl ModelArtifact {
    pub fn train(segments: &[&Segment], opts: &TrainOptions) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Empty("no training segments".into()));
        }
        let labels: Vec<Label> = segments.iter().map(|s| s.label()).collect();
        let training_subjects: Vec<String> = segments
            .iter()
            .map(|s| s.subject_id().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();

        let (params, pipeline) = if opts.kind.uses_features() {
            let features = extract_all(segments.to_vec())?;
            let raw: Vec<Vec<f64>> = features.iter().map(|f| f.values.to_vec()).collect();
            let normalizer = Normalizer::fit(&raw)?;
            let rows = raw
                .iter()
                .map(|r| normalizer.apply(r))
                .collect::<Result<Vec<_>>>()?;
            let selected = match opts.k_features {
                Some(k) => mrmr_select(&rows, &labels, k, opts.scoring)?.ranked_indices,
                None => {
                    let choice = choose_k(&rows, &labels, opts.scoring, |x, y| train_on_features(opts, x, y))?;
                    choice.selection.ranked_indices[..choice.k].to_vec()
                }
            };
            let x = project(&rows, &selected);
            (
                train_on_features(opts, &x, &labels)?,
                Some(FeaturePipeline { normalizer, selected }),
            )
        } else {
            let windows = segments
                .iter()
                .map(|s| resample_to_window(s))
                .collect::<Result<Vec<_>>>()?;
            (ModelParams::Cnn(CnnModel::train(&windows, &labels, &opts.cnn, opts.seed)?.0), None)
        };
        Ok(ModelArtifact {
            params,
            pipeline,
            training_subjects,
            format_version: FORMAT_VERSION,
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::Svm(_) => ModelKind::Svm,
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::Cnn(_) => ModelKind::Cnn,
        }
    }

    pub fn selected_feature_names(&self) -> Vec<&'static str> {
        self.pipeline
            .as_ref()
            .map(FeaturePipeline::selected_names)
            .unwrap_or_default()
    }

    pub fn predict_all(&self, segments: &[&Segment]) -> Result<Vec<Prediction>> {
        segments.par_iter().map(|s| self.predict(*s)).collect()
    }
}

impl Predictor<Segment> for ModelArtifact {
    fn predict(&self, segment: &Segment) -> Result<Prediction> {
        match (&self.params, &self.pipeline) {
            (ModelParams::Cnn(m), _) => m.predict(segment),
            (params, Some(p)) => params.predict(&p.transform(segment)?),
            (_, None) => Err(Error::CorruptModel("feature model without a feature pipeline".into())),
        }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptModel(format!("unexpected end of file at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn count(&mut self, elem_size: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() - self.pos {
            return Err(Error::CorruptModel(format!("length {n} exceeds file size")));
        }
        Ok(n)
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::CorruptModel("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptModel("invalid UTF-8 string".into()))
    }
}

fn push_dense(payload: &mut Vec<f64>, d: &Dense) {
    payload.extend(d.w.iter());
    payload.extend(d.b.iter());
}

/// Consumes the payload front to back.
struct Payload {
    values: Vec<f64>,
    pos: usize,
}

impl Payload {
    fn take(&mut self, n: usize) -> Result<&[f64]> {
        if self.pos + n > self.values.len() {
            return Err(Error::CorruptModel("payload shorter than its shape header".into()));
        }
        let s = &self.values[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn dense(&mut self, fan_in: usize, fan_out: usize) -> Result<Dense> {
        let w = Array2::from_shape_vec((fan_in, fan_out), self.take(fan_in * fan_out)?.to_vec())
            .map_err(|e| Error::CorruptModel(e.to_string()))?;
        let b = Array1::from(self.take(fan_out)?.to_vec());
        Ok(Dense { w, b })
    }
    fn finish(self) -> Result<()> {
        if self.pos != self.values.len() {
            return Err(Error::CorruptModel("payload longer than its shape header".into()));
        }
        Ok(())
    }
}

const CNN_SHAPE: [u64; 7] = [
    WINDOW_LEN as u64,
    WINDOW_CHANNELS as u64,
    cnn::FILTERS as u64,
    cnn::KERNEL as u64,
    cnn::POOL as u64,
    cnn::HIDDEN as u64,
    cnn::OUTPUTS as u64,
];

pub fn to_bytes(artifact: &ModelArtifact) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION);
    w.u8(artifact.kind().tag());
    w.u32(artifact.training_subjects.len() as u32);
    for s in &artifact.training_subjects {
        w.str(s);
    }
    match &artifact.pipeline {
        Some(p) => {
            w.u8(1);
            w.u32(p.normalizer.dim() as u32);
            w.f64s(&p.normalizer.mins);
            w.f64s(&p.normalizer.maxs);
            w.u32(p.selected.len() as u32);
            for &i in &p.selected {
                w.u32(i as u32);
                w.str(FEATURE_NAMES.get(i).copied().unwrap_or(""));
            }
        }
        None => w.u8(0),
    }

    let mut payload = Vec::new();
    let shape: Vec<u64> = match &artifact.params {
        ModelParams::Knn(m) => {
            payload.extend(m.points.iter().flatten());
            payload.extend(m.labels.iter().map(|l| if l.is_dorsiflexion() { 1.0 } else { 0.0 }));
            vec![m.k as u64, m.points.len() as u64, m.dim() as u64]
        }
        ModelParams::Svm(m) => {
            payload.extend(&m.weights);
            payload.push(m.bias);
            vec![m.weights.len() as u64]
        }
        ModelParams::Mlp(m) => {
            payload.push(m.dropout);
            for d in [&m.hidden1, &m.hidden2, &m.output] {
                push_dense(&mut payload, d);
            }
            vec![m.input_dim() as u64, mlp::HIDDEN1 as u64, mlp::HIDDEN2 as u64, mlp::OUTPUTS as u64]
        }
        ModelParams::Cnn(m) => {
            payload.extend(m.scaler.mean);
            payload.extend(m.scaler.std);
            for d in [&m.conv, &m.hidden, &m.output] {
                push_dense(&mut payload, d);
            }
            CNN_SHAPE.to_vec()
        }
    };
    w.u32(shape.len() as u32);
    shape.iter().for_each(|&s| w.u64(s));
    w.u64(payload.len() as u64);
    w.f64s(&payload);
    let sum = fnv1a(&w.0);
    w.u64(sum);
    w.0
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelArtifact> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::CorruptModel("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    if bytes.len() < 8 || fnv1a(&bytes[..bytes.len() - 8]) != u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes")) {
        return Err(Error::CorruptModel("checksum mismatch (truncated or damaged file)".into()));
    }
    let kind = ModelKind::from_tag(r.u8()?)?;
    let n_subjects = r.u32()? as usize;
    let training_subjects = (0..n_subjects).map(|_| r.str()).collect::<Result<Vec<_>>>()?;

    let pipeline = match r.u8()? {
        0 => None,
        1 => {
            let dim = r.u32()? as usize;
            if dim != FEATURE_COUNT {
                return Err(Error::CorruptModel(format!("normalizer has {dim} features, expected {FEATURE_COUNT}")));
            }
            let mins = r.f64s(dim)?;
            let maxs = r.f64s(dim)?;
            let n_sel = r.u32()? as usize;
            let mut selected = Vec::with_capacity(n_sel.min(FEATURE_COUNT));
            for _ in 0..n_sel {
                let i = r.u32()? as usize;
                let name = r.str()?;
                if FEATURE_NAMES.get(i) != Some(&name.as_str()) {
                    return Err(Error::CorruptModel(format!("selected feature {i} named `{name}` is not canonical")));
                }
                selected.push(i);
            }
            Some(FeaturePipeline {
                normalizer: Normalizer { mins, maxs },
                selected,
            })
        }
        flag => return Err(Error::CorruptModel(format!("bad pipeline flag {flag}"))),
    };

    let n_shape = r.u32()? as usize;
    if n_shape > 16 {
        return Err(Error::CorruptModel("oversized shape header".into()));
    }
    let shape = (0..n_shape).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    let n_payload = r.count(8)?;
    let mut p = Payload {
        values: r.f64s(n_payload)?,
        pos: 0,
    };
    let shape_err = || Error::CorruptModel(format!("bad shape header {shape:?} for {}", kind.name()));
    let feature_dim = pipeline.as_ref().map(|p| p.selected.len());

    let params = match kind {
        ModelKind::Knn => {
            let [k, n, dim] = shape[..] else { return Err(shape_err()) };
            if feature_dim != Some(dim) || n == 0 {
                return Err(shape_err());
            }
            let flat = p.take(n.checked_mul(dim).ok_or_else(shape_err)?)?.to_vec();
            let points = if dim == 0 { vec![Vec::new(); n] } else { flat.chunks(dim).map(<[f64]>::to_vec).collect() };
            let labels = p
                .take(n)?
                .iter()
                .map(|&v| if v == 1.0 { Label::Dorsiflexion } else { Label::Other })
                .collect();
            ModelParams::Knn(KnnModel { k, points, labels })
        }
        ModelKind::Svm => {
            let [dim] = shape[..] else { return Err(shape_err()) };
            if feature_dim != Some(dim) {
                return Err(shape_err());
            }
            let weights = p.take(dim)?.to_vec();
            let bias = p.take(1)?[0];
            ModelParams::Svm(SvmModel { weights, bias })
        }
        ModelKind::Mlp => {
            let [input, h1, h2, out] = shape[..] else { return Err(shape_err()) };
            if feature_dim != Some(input) || (h1, h2, out) != (mlp::HIDDEN1, mlp::HIDDEN2, mlp::OUTPUTS) {
                return Err(shape_err());
            }
            let dropout = p.take(1)?[0];
            ModelParams::Mlp(MlpModel {
                hidden1: p.dense(input, h1)?,
                hidden2: p.dense(h1, h2)?,
                output: p.dense(h2, out)?,
                dropout,
            })
        }
        ModelKind::Cnn => {
            if shape.iter().map(|&s| s as u64).ne(CNN_SHAPE) || pipeline.is_some() {
                return Err(shape_err());
            }
            let mean: [f64; WINDOW_CHANNELS] = p.take(WINDOW_CHANNELS)?.try_into().expect("6");
            let std: [f64; WINDOW_CHANNELS] = p.take(WINDOW_CHANNELS)?.try_into().expect("6");
            ModelParams::Cnn(CnnModel {
                conv: p.dense(cnn::KERNEL * WINDOW_CHANNELS, cnn::FILTERS)?,
                hidden: p.dense(cnn::FLAT_LEN, cnn::HIDDEN)?,
                output: p.dense(cnn::HIDDEN, cnn::OUTPUTS)?,
                scaler: ChannelScaler { mean, std },
            })
        }
    };
    p.finish()?;
    r.take(8)?;
    if r.pos != bytes.len() {
        return Err(Error::CorruptModel("trailing bytes after checksum".into()));
    }
    Ok(ModelArtifact {
        params,
        pipeline,
        training_subjects,
        format_version: version,
    })
}

pub fn save(artifact: &ModelArtifact, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(artifact))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelArtifact> {
    from_bytes(&fs::read(path)?)
}

/// Convenience for callers holding raw windows.
pub fn windows_for(segments: &[&Segment]) -> Result<Vec<RawWindow>> {
    segments.iter().map(|s| resample_to_window(s)).collect()
}
