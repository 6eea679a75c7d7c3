//! Sensor recordings, annotation files, dataset manifests and subject-wise
//! splits.
//!
//! File formats:
//!
//! * sensor CSV, header `t,ax,ay,az,gx,gy,gz`, one row per sample;
//! * annotation CSV, header `start_s,end_s,label` with label `dorsiflexion`
//!   or `other`. An optional fourth column `movement_class` keeps the fine
//!   grained class; without it the class defaults from the label;
//! * manifest, one `sensor_file<TAB>annotation_file<TAB>subject_id` triple per
//!   line. Relative paths are resolved against the manifest's directory.
//!   Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Label, Segment, SensorSample, DEFAULT_SAMPLE_RATE_HZ, MOVEMENT_CLASSES};

pub const SENSOR_HEADER: &str = "t,ax,ay,az,gx,gy,gz";
pub const ANNOTATION_HEADER: &str = "start_s,end_s,label";
const ANNOTATION_HEADER_WITH_CLASS: &str = "start_s,end_s,label,movement_class";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub start_s: f64,
    pub end_s: f64,
    pub label: Label,
    pub movement_class: Option<u8>,
}

impl Annotation {
    pub fn new(start_s: f64, end_s: f64, label: Label) -> Result<Self> {
        let a = Annotation {
            start_s,
            end_s,
            label,
            movement_class: None,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn with_class(mut self, movement_class: u8) -> Result<Self> {
        self.movement_class = Some(movement_class);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.start_s.is_finite() && self.end_s.is_finite())
            || self.start_s < 0.0
            || self.start_s >= self.end_s
        {
            return Err(Error::Range(format!(
                "annotation interval must satisfy 0 <= start < end, got ({}, {})",
                self.start_s, self.end_s
            )));
        }
        if let Some(c) = self.movement_class {
            if !(1..=MOVEMENT_CLASSES).contains(&c) {
                return Err(Error::invalid(format!("movement class {c} out of range")));
            }
            if Label::from_class(c) != self.label {
                return Err(Error::invalid(format!(
                    "movement class {c} contradicts label `{}`",
                    self.label
                )));
            }
        }
        Ok(())
    }

    fn class(&self) -> u8 {
        self.movement_class.unwrap_or(self.label.default_class())
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with their 1-based line numbers, header first.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_f64(path: &Path, line: usize, field: &str, name: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid number `{field}` in column {name}")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value in column {name}")));
    }
    Ok(v)
}

pub fn read_sensor_csv(path: &Path) -> Result<Vec<SensorSample>> {
    let text = fs::read_to_string(path)?;
    parse_sensor_csv(&text, path)
}

pub fn parse_sensor_csv(text: &str, path: &Path) -> Result<Vec<SensorSample>> {
    let mut lines = data_lines(text);
    match lines.next() {
        Some((_, h)) if h.trim() == SENSOR_HEADER => {}
        Some((n, h)) => {
            return Err(parse_err(
                path,
                n,
                format!("expected header `{SENSOR_HEADER}`, found `{h}`"),
            ))
        }
        None => return Err(parse_err(path, 1, "missing header")),
    }
    let names = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
    let mut samples: Vec<SensorSample> = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                path,
                n,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let mut v = [0.0; 7];
        for (i, f) in fields.iter().enumerate() {
            v[i] = parse_f64(path, n, f, names[i])?;
        }
        let s = SensorSample::from_array(v[0], [v[1], v[2], v[3], v[4], v[5], v[6]]);
        s.validate().map_err(|e| parse_err(path, n, e.to_string()))?;
        if let Some(prev) = samples.last() {
            if s.t < prev.t {
                return Err(parse_err(path, n, "timestamps must be non-decreasing"));
            }
        }
        samples.push(s);
    }
    Ok(samples)
}

/// Writes samples using the shortest decimal form that parses back to the
/// same `f64`, so a write/read cycle is lossless.
pub fn write_sensor_csv(path: &Path, samples: &[SensorSample]) -> Result<()> {
    let mut out = String::with_capacity(samples.len() * 64);
    out.push_str(SENSOR_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.t, s.ax, s.ay, s.az, s.gx, s.gy, s.gz
        );
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let text = fs::read_to_string(path)?;
    parse_annotations(&text, path)
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<Annotation>> {
    let mut lines = data_lines(text);
    let with_class = match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, h)) if h.trim() == ANNOTATION_HEADER => false,
        Some((_, h)) if h.trim() == ANNOTATION_HEADER_WITH_CLASS => true,
        Some((n, h)) => {
            return Err(parse_err(
                path,
                n,
                format!("expected header `{ANNOTATION_HEADER}`, found `{h}`"),
            ))
        }
    };
    let width = if with_class { 4 } else { 3 };
    let mut out = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                path,
                n,
                format!("expected {width} fields, found {}", fields.len()),
            ));
        }
        let start = parse_f64(path, n, fields[0], "start_s")?;
        let end = parse_f64(path, n, fields[1], "end_s")?;
        let label: Label = fields[2]
            .parse()
            .map_err(|e: Error| parse_err(path, n, e.to_string()))?;
        let mut a = Annotation::new(start, end, label).map_err(|e| parse_err(path, n, e.to_string()))?;
        if with_class {
            let c: u8 = fields[3]
                .trim()
                .parse()
                .map_err(|_| parse_err(path, n, format!("invalid movement class `{}`", fields[3])))?;
            a = a.with_class(c).map_err(|e| parse_err(path, n, e.to_string()))?;
        }
        out.push(a);
    }
    Ok(out)
}

/// Writes the three-column form unless some annotation carries a class.
pub fn write_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    let with_class = annotations.iter().any(|a| a.movement_class.is_some());
    let mut out = String::new();
    out.push_str(if with_class {
        ANNOTATION_HEADER_WITH_CLASS
    } else {
        ANNOTATION_HEADER
    });
    out.push('\n');
    for a in annotations {
        let _ = write!(out, "{},{},{}", a.start_s, a.end_s, a.label);
        if with_class {
            let _ = write!(out, ",{}", a.class());
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Mean sample rate implied by the timestamps; falls back to the default
/// rate when the timestamps carry no spacing information.
pub fn estimate_sample_rate(samples: &[SensorSample]) -> f64 {
    match (samples.first(), samples.last()) {
        (Some(a), Some(b)) if samples.len() >= 2 && b.t > a.t => {
            (samples.len() - 1) as f64 / (b.t - a.t)
        }
        _ => DEFAULT_SAMPLE_RATE_HZ,
    }
}

/// Cuts one segment per annotation out of a recording.
pub fn segments_from_recording(
    samples: &[SensorSample],
    annotations: &[Annotation],
    subject_id: &str,
) -> Result<Vec<Segment>> {
    if annotations.is_empty() {
        return Ok(Vec::new());
    }
    let (Some(first), Some(last)) = (samples.first(), samples.last()) else {
        return Err(Error::Range("annotations given for an empty recording".into()));
    };
    let rate = estimate_sample_rate(samples);
    let (lo, hi) = (first.t, last.t + 1.0 / rate);
    annotations
        .iter()
        .map(|a| {
            if a.start_s < lo || a.end_s > hi {
                return Err(Error::Range(format!(
                    "annotation ({}, {}) lies outside the recording span [{lo}, {hi}]",
                    a.start_s, a.end_s
                )));
            }
            let from = samples.partition_point(|s| s.t < a.start_s);
            let to = samples.partition_point(|s| s.t <= a.end_s);
            let clipped = samples[from..to].to_vec();
            if clipped.len() < 2 {
                return Err(Error::Range(format!(
                    "annotation ({}, {}) covers {} sample(s); at least 2 are required",
                    a.start_s,
                    a.end_s,
                    clipped.len()
                )));
            }
            Segment::new(clipped, subject_id, a.class(), rate)
        })
        .collect()
}

pub fn read_recording(
    sensor_file: &Path,
    annotation_file: &Path,
    subject_id: &str,
) -> Result<Vec<Segment>> {
    let samples = read_sensor_csv(sensor_file)?;
    let annotations = read_annotations(annotation_file)?;
    segments_from_recording(&samples, &annotations, subject_id)
}

pub fn write_recording(
    sensor_file: &Path,
    annotation_file: &Path,
    samples: &[SensorSample],
    annotations: &[Annotation],
) -> Result<()> {
    write_sensor_csv(sensor_file, samples)?;
    write_annotations(annotation_file, annotations)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sensor_file: PathBuf,
    pub annotation_file: PathBuf,
    pub subject_id: String,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut out = Vec::new();
    for (n, line) in data_lines(&text) {
        if line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(parse_err(
                path,
                n,
                "expected sensor_file<TAB>annotation_file<TAB>subject_id",
            ));
        }
        out.push(ManifestEntry {
            sensor_file: base.join(fields[0].trim()),
            annotation_file: base.join(fields[1].trim()),
            subject_id: fields[2].trim().to_string(),
        });
    }
    Ok(out)
}

/// Writes entries with paths relative to the manifest's directory when they
/// live underneath it.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let rel = |p: &Path| -> String {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            rel(&e.sensor_file),
            rel(&e.annotation_file),
            e.subject_id
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// Train/test partition as indices into `Dataset::segments`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub segments: Vec<Segment>,
    pub split: Option<Split>,
}

impl Dataset {
    pub fn new(segments: Vec<Segment>) -> Self {
        Dataset {
            segments,
            split: None,
        }
    }

    /// Reads every recording listed in a manifest. Files are parsed in
    /// parallel; segment order follows the manifest.
    pub fn from_manifest(path: &Path) -> Result<Self> {
        let entries = read_manifest(path)?;
        let parts = entries
            .par_iter()
            .map(|e| read_recording(&e.sensor_file, &e.annotation_file, &e.subject_id))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::new(parts.into_iter().flatten().collect()))
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.segments.iter().map(|s| s.subject_id()).collect()
    }

    pub fn train(&self) -> Vec<&Segment> {
        self.partition(|s| &s.train)
    }

    pub fn test(&self) -> Vec<&Segment> {
        self.partition(|s| &s.test)
    }

    fn partition(&self, pick: impl Fn(&Split) -> &Vec<usize>) -> Vec<&Segment> {
        match &self.split {
            Some(split) => pick(split).iter().map(|&i| &self.segments[i]).collect(),
            None => Vec::new(),
        }
    }
}

/// Routes every segment to the test partition when its subject is listed,
/// otherwise to training.
pub fn split_by_subject<S: AsRef<str>>(dataset: &Dataset, test_subjects: &[S]) -> Result<Dataset> {
    if test_subjects.is_empty() {
        return Err(Error::DegenerateSplit("no test subjects given".into()));
    }
    let known = dataset.subjects();
    let wanted: BTreeSet<&str> = test_subjects.iter().map(|s| s.as_ref()).collect();
    if let Some(missing) = wanted.iter().find(|s| !known.contains(*s)) {
        return Err(Error::UnknownSubject(missing.to_string()));
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.segments.len())
        .partition(|&i| wanted.contains(dataset.segments[i].subject_id()));
    if train.is_empty() {
        return Err(Error::DegenerateSplit("training partition would be empty".into()));
    }
    Ok(Dataset {
        segments: dataset.segments.clone(),
        split: Some(Split { train, test }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synthesize, MovementKind, SynthesisParams};

    fn recording(seconds: f64) -> Vec<SensorSample> {
        let mut p = SynthesisParams::new(MovementKind::Still);
        p.duration_s = seconds;
        p.noise_std = 0.1;
        p.seed = 5;
        synthesize(&p).unwrap().samples().to_vec()
    }

    #[test]
    fn one_segment_per_annotation() {
        let samples = recording(10.0);
        let ann = vec![
            Annotation::new(1.0, 2.0, Label::Dorsiflexion).unwrap(),
            Annotation::new(4.0, 5.0, Label::Other).unwrap(),
        ];
        let segs = segments_from_recording(&samples, &ann, "s1").unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].label(), Label::Dorsiflexion);
        assert_eq!(segs[1].label(), Label::Other);
        assert_eq!(segs[0].len(), 51);
        assert!((segs[0].sample_rate_hz() - 50.0).abs() < 1e-9);
    }

    #[test]
    fn annotation_past_end_is_range_error() {
        let samples = recording(10.0);
        let ann = vec![Annotation::new(9.5, 11.0, Label::Other).unwrap()];
        assert!(matches!(
            segments_from_recording(&samples, &ann, "s1"),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn single_sample_annotation_rejected() {
        let samples = recording(2.0);
        let ann = vec![Annotation::new(1.001, 1.002, Label::Other).unwrap()];
        assert!(segments_from_recording(&samples, &ann, "s1").is_err());
    }

    #[test]
    fn empty_annotation_file_gives_no_segments() {
        let p = Path::new("a.csv");
        assert!(parse_annotations("", p).unwrap().is_empty());
        assert!(parse_annotations("start_s,end_s,label\n", p).unwrap().is_empty());
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = "t,ax,ay,az,gx,gy,gz\n0,0,0,0,0,0,0\n0.02,0,x,0,0,0,0\n";
        match parse_sensor_csv(text, Path::new("s.csv")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "t,ax,ay,az,gx,gy,gz\n0,0,0,0,0,0\n";
        assert!(matches!(
            parse_sensor_csv(text, Path::new("s.csv")),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_label = "start_s,end_s,label\n0,1,maybe\n";
        assert!(matches!(
            parse_annotations(bad_label, Path::new("a.csv")),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn class_column_must_agree_with_label() {
        let text = "start_s,end_s,label,movement_class\n0,1,dorsiflexion,12\n";
        assert!(parse_annotations(text, Path::new("a.csv")).is_err());
        let text = "start_s,end_s,label,movement_class\n0,1,dorsiflexion,7\n";
        let a = parse_annotations(text, Path::new("a.csv")).unwrap();
        assert_eq!(a[0].movement_class, Some(7));
    }

    fn seg(subject: &str, class: u8) -> Segment {
        let s = |t| SensorSample::from_array(t, [0.0; 6]);
        Segment::new(vec![s(0.0), s(0.02)], subject, class, 50.0).unwrap()
    }

    #[test]
    fn subject_wise_split() {
        // 20 subjects, the first 17 with two sessions each.
        let mut segs = Vec::new();
        for i in 0..20 {
            let sessions = if i < 17 { 2 } else { 1 };
            for _ in 0..sessions {
                segs.push(seg(&format!("s{i:02}"), 1));
                segs.push(seg(&format!("s{i:02}"), 20));
            }
        }
        let ds = Dataset::new(segs);
        let test = ["s00", "s05", "s10", "s15", "s19"];
        let split = split_by_subject(&ds, &test).unwrap();
        let train_subjects: BTreeSet<&str> = split.train().iter().map(|s| s.subject_id()).collect();
        let test_subjects: BTreeSet<&str> = split.test().iter().map(|s| s.subject_id()).collect();
        assert_eq!(train_subjects.len(), 15);
        assert_eq!(test_subjects.len(), 5);
        assert!(train_subjects.is_disjoint(&test_subjects));
        assert_eq!(split.train().len() + split.test().len(), ds.segments.len());
        // s00 has two sessions; all four of its segments are in test.
        assert_eq!(split.test().iter().filter(|s| s.subject_id() == "s00").count(), 4);
        assert_eq!(split, split_by_subject(&ds, &test).unwrap());
    }

    #[test]
    fn degenerate_splits_rejected() {
        let ds = Dataset::new(vec![seg("a", 1), seg("b", 20)]);
        assert!(matches!(
            split_by_subject(&ds, &["a", "b"]),
            Err(Error::DegenerateSplit(_))
        ));
        assert!(matches!(
            split_by_subject(&ds, &["zz"]),
            Err(Error::UnknownSubject(_))
        ));
        let none: [&str; 0] = [];
        assert!(split_by_subject(&ds, &none).is_err());
    }
}
