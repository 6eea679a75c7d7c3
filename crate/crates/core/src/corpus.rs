//! Synthetic labeled corpus: many subjects, 28 movement classes (1 to 10
//! dorsiflexion), written as one continuous recording per subject with
//! annotations and a manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_manifest, write_recording, Annotation, ManifestEntry};
use crate::signal::{
    synthesize, Axis, Label, MovementKind, Segment, SensorSample, SynthesisParams, DORSIFLEXION_CLASSES,
    MOVEMENT_CLASSES,
};

pub const MANIFEST_FILE: &str = "manifest.tsv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub subjects: usize,
    pub segments_per_subject: usize,
    /// Share of each subject's segments that are dorsiflexion.
    pub dorsiflexion_fraction: f64,
    pub noise_std: f64,
    pub sample_rate_hz: f64,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Still time between consecutive movements in a recording.
    pub gap_s: f64,
    /// The last `test_subjects` subjects form the test partition.
    pub test_subjects: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            subjects: 20,
            segments_per_subject: 30,
            dorsiflexion_fraction: 0.5,
            noise_std: 0.3,
            sample_rate_hz: 50.0,
            min_duration_s: 1.0,
            max_duration_s: 2.5,
            gap_s: 1.0,
            test_subjects: 5,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dorsiflexion_fraction) {
            return Err(Error::invalid("dorsiflexion_fraction must lie in [0, 1]"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("noise_std must be >= 0"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::invalid("sample_rate_hz must be > 0"));
        }
        if !(self.min_duration_s > 0.0 && self.min_duration_s <= self.max_duration_s && self.max_duration_s.is_finite()) {
            return Err(Error::invalid("durations must satisfy 0 < min_duration_s <= max_duration_s"));
        }
        if !(self.gap_s > 0.0 && self.gap_s.is_finite()) {
            return Err(Error::invalid("gap_s must be > 0"));
        }
        if self.subjects > 0 && self.test_subjects >= self.subjects {
            return Err(Error::invalid("test_subjects must be smaller than subjects"));
        }
        Ok(())
    }

    pub fn subject_ids(&self) -> Vec<String> {
        (1..=self.subjects).map(subject_id).collect()
    }

    pub fn test_subject_ids(&self) -> Vec<String> {
        self.subject_ids().split_off(self.subjects - self.test_subjects.min(self.subjects))
    }
}

pub fn subject_id(i: usize) -> String {
    format!("S{i:02}")
}

/// Nominal signal shape of one movement class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub class: u8,
    pub kind: MovementKind,
    pub axis: Axis,
    pub amplitude: f64,
    pub frequency_hz: f64,
}

/// Classes 1-10 dorsiflexion at two amplitudes and five speeds; 11-16
/// rotations about y and z; 17-26 shakes along each axis; 27-28 still.
pub fn class_table() -> Vec<ClassSpec> {
    (1..=MOVEMENT_CLASSES)
        .map(|class| {
            let c = class as usize;
            let (kind, axis, amplitude, frequency_hz) = match class {
                1..=DORSIFLEXION_CLASSES => (
                    MovementKind::Dorsiflexion,
                    Axis::X,
                    [1.2, 2.4][(c - 1) / 5],
                    [1.0, 1.5, 2.0, 2.5, 3.0][(c - 1) % 5],
                ),
                11..=16 => (
                    MovementKind::Rotation,
                    if c <= 13 { Axis::Y } else { Axis::Z },
                    [1.2, 2.0, 2.8][(c - 11) % 3],
                    1.5,
                ),
                17..=26 => (
                    MovementKind::Shake,
                    [Axis::X, Axis::Y, Axis::Z][(c - 17) % 3],
                    1.0 + 0.2 * (c - 17) as f64,
                    2.0 + 0.25 * (c - 17) as f64,
                ),
                _ => (MovementKind::Still, Axis::X, 0.0, 1.0),
            };
            ClassSpec {
                class,
                kind,
                axis,
                amplitude,
                frequency_hz,
            }
        })
        .collect()
}

/// Per-subject segments in generation order. Each subject has its own
/// amplitude scale; each instance jitters amplitude, frequency and duration.
pub fn generate(cfg: &CorpusConfig) -> Result<Vec<Vec<Segment>>> {
    cfg.validate()?;
    let table = class_table();
    let (dorsi, other): (Vec<&ClassSpec>, Vec<&ClassSpec>) =
        table.iter().partition(|c| Label::from_class(c.class).is_dorsiflexion());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_dorsi = (cfg.segments_per_subject as f64 * cfg.dorsiflexion_fraction).round() as usize;

    cfg.subject_ids()
        .into_iter()
        .enumerate()
        .map(|(si, subject)| {
            let scale = rng.random_range(0.85..=1.15);
            (0..cfg.segments_per_subject)
                .map(|j| {
                    let spec = if j < n_dorsi {
                        dorsi[(j + si) % dorsi.len()]
                    } else {
                        other[(j - n_dorsi + si) % other.len()]
                    };
                    let mut p = SynthesisParams::new(spec.kind);
                    p.movement_class = spec.class;
                    p.dominant_axis = spec.axis;
                    p.amplitude = spec.amplitude * scale * rng.random_range(0.85..=1.15);
                    p.frequency_hz = spec.frequency_hz * rng.random_range(0.85..=1.15);
                    p.duration_s = rng.random_range(cfg.min_duration_s..=cfg.max_duration_s);
                    p.noise_std = cfg.noise_std;
                    p.sample_rate_hz = cfg.sample_rate_hz;
                    p.seed = rng.random();
                    p.subject_id = subject.clone();
                    synthesize(&p)
                })
                .collect()
        })
        .collect()
}

/// A subject's continuous recording and its annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub samples: Vec<SensorSample>,
    pub annotations: Vec<Annotation>,
}

/// Lays segments end to end on one uniform time grid, separated by still
/// gaps. Annotation bounds sit a quarter sample outside the first and last
/// sample so that cutting the recording returns exactly the same samples.
pub fn assemble(subject: &str, segments: &[Segment], cfg: &CorpusConfig, seed: u64) -> Result<Recording> {
    let rate = cfg.sample_rate_hz;
    let mut gap = SynthesisParams::new(MovementKind::Still);
    gap.duration_s = cfg.gap_s;
    gap.noise_std = cfg.noise_std;
    gap.sample_rate_hz = rate;

    let mut values: Vec<[f64; 6]> = Vec::new();
    let mut annotations = Vec::with_capacity(segments.len());
    let mut push_gap = |values: &mut Vec<[f64; 6]>, k: u64| -> Result<()> {
        gap.seed = seed.wrapping_add(k);
        values.extend(synthesize(&gap)?.samples().iter().map(SensorSample::values));
        Ok(())
    };
    push_gap(&mut values, 0)?;
    for (k, s) in segments.iter().enumerate() {
        let first = values.len();
        values.extend(s.samples().iter().map(SensorSample::values));
        let last = values.len() - 1;
        annotations.push(
            Annotation::new(
                (first as f64 - 0.25) / rate,
                (last as f64 + 0.25) / rate,
                s.label(),
            )?
            .with_class(s.movement_class())?,
        );
        push_gap(&mut values, k as u64 + 1)?;
    }
    let samples = values
        .into_iter()
        .enumerate()
        .map(|(i, v)| SensorSample::from_array(i as f64 / rate, v))
        .collect();
    Ok(Recording {
        subject_id: subject.to_string(),
        samples,
        annotations,
    })
}

/// Writes `<subject>.sensor.csv`, `<subject>.annotations.csv` and the
/// manifest into `dir`. Returns the manifest path. A configuration without
/// segments yields an empty manifest.
pub fn write_corpus(cfg: &CorpusConfig, dir: &Path) -> Result<PathBuf> {
    let per_subject = if cfg.segments_per_subject == 0 {
        cfg.validate()?;
        Vec::new()
    } else {
        generate(cfg)?
    };
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(per_subject.len());
    for (i, segments) in per_subject.iter().enumerate() {
        let subject = subject_id(i + 1);
        let rec = assemble(&subject, segments, cfg, cfg.seed ^ ((i as u64 + 1) << 32))?;
        let entry = ManifestEntry {
            sensor_file: dir.join(format!("{subject}.sensor.csv")),
            annotation_file: dir.join(format!("{subject}.annotations.csv")),
            subject_id: subject,
        };
        write_recording(&entry.sensor_file, &entry.annotation_file, &rec.samples, &rec.annotations)?;
        entries.push(entry);
    }
    let manifest = dir.join(MANIFEST_FILE);
    write_manifest(&manifest, &entries)?;
    Ok(manifest)
}
