//! Statistical descriptors, min-max normalization and the live movement
//! indicators (range of motion and speed).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Channel, Segment};

pub const STATS_PER_CHANNEL: usize = 7;
pub const FEATURE_COUNT: usize = 6 * STATS_PER_CHANNEL;

pub const STAT_NAMES: [&str; STATS_PER_CHANNEL] =
    ["mean", "min", "max", "std", "var", "skew", "kurtosis"];

/// Canonical feature names, channel-major.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "ax.mean", "ax.min", "ax.max", "ax.std", "ax.var", "ax.skew", "ax.kurtosis",
    "ay.mean", "ay.min", "ay.max", "ay.std", "ay.var", "ay.skew", "ay.kurtosis",
    "az.mean", "az.min", "az.max", "az.std", "az.var", "az.skew", "az.kurtosis",
    "gx.mean", "gx.min", "gx.max", "gx.std", "gx.var", "gx.skew", "gx.kurtosis",
    "gy.mean", "gy.min", "gy.max", "gy.std", "gy.var", "gy.skew", "gy.kurtosis",
    "gz.mean", "gz.min", "gz.max", "gz.std", "gz.var", "gz.skew", "gz.kurtosis",
];

pub fn feature_index(channel: Channel, stat: usize) -> usize {
    channel.index() * STATS_PER_CHANNEL + stat
}

pub fn feature_index_by_name(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// The seven descriptors of one channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
    pub var: f64,
    pub skew: f64,
    pub kurtosis: f64,
}

impl Moments {
    pub fn as_array(&self) -> [f64; STATS_PER_CHANNEL] {
        [
            self.mean,
            self.min,
            self.max,
            self.std,
            self.var,
            self.skew,
            self.kurtosis,
        ]
    }
}

/// Population moments of `values`. Skew is `m3 / σ³`, kurtosis is the excess
/// `m4 / σ⁴ - 3`; both are 0 when the values are all equal.
pub fn moments(values: &[f64]) -> Result<Moments> {
    if values.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let mean = values.iter().sum::<f64>() / n;
    if min == max {
        return Ok(Moments {
            mean: min,
            min,
            max,
            std: 0.0,
            var: 0.0,
            skew: 0.0,
            kurtosis: 0.0,
        });
    }
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let std = m2.sqrt();
    let (skew, kurtosis) = if m2 > 0.0 {
        (m3 / (m2 * std), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    Ok(Moments {
        mean,
        min,
        max,
        std,
        var: m2,
        skew,
        kurtosis,
    })
}

/// The 42 descriptors of one segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn names() -> &'static [&'static str; FEATURE_COUNT] {
        &FEATURE_NAMES
    }

    pub fn get(&self, channel: Channel, stat: usize) -> f64 {
        self.values[feature_index(channel, stat)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

pub fn extract(segment: &Segment) -> Result<FeatureVector> {
    let mut values = [0.0; FEATURE_COUNT];
    for ch in Channel::ALL {
        let m = moments(&segment.channel_values(ch))?;
        let base = ch.index() * STATS_PER_CHANNEL;
        values[base..base + STATS_PER_CHANNEL].copy_from_slice(&m.as_array());
    }
    Ok(FeatureVector { values })
}

pub fn extract_all<'a, I>(segments: I) -> Result<Vec<FeatureVector>>
where
    I: IntoParallelIterator<Item = &'a Segment>,
    I::Iter: IndexedParallelIterator,
{
    segments.into_par_iter().map(extract).collect()
}

/// Per-feature `(min, max)` learned from a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Normalizer {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Normalizer> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Empty("normalizer needs at least one vector".into()))?;
        let dim = first.as_ref().len();
        let mut mins = vec![f64::INFINITY; dim];
        let mut maxs = vec![f64::NEG_INFINITY; dim];
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                mins[j] = mins[j].min(x);
                maxs[j] = maxs[j].max(x);
            }
        }
        Ok(Normalizer { mins, maxs })
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }

    /// `(v - min) / (max - min)` clamped to `[0, 1]`; a feature that was
    /// constant in training maps to 0.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(v.iter()
            .zip(self.mins.iter().zip(&self.maxs))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect())
    }
}

/// Range-of-motion indicator: population standard deviation of the x-axis
/// gyroscope.
pub fn rom_indicator(segment: &Segment) -> Result<f64> {
    Ok(moments(&segment.channel_values(Channel::Gx))?.std)
}

/// Sign changes between consecutive samples. An exact zero takes the sign of
/// the last nonzero sample before it; leading zeros have no sign.
pub fn zero_crossings(signal: &[f64]) -> usize {
    let mut prev = 0i8;
    let mut count = 0;
    for &x in signal {
        let s = if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            prev
        };
        if s != 0 && prev != 0 && s != prev {
            count += 1;
        }
        if s != 0 {
            prev = s;
        }
    }
    count
}

/// Zero crossings of one channel per second elapsed between the first and
/// last sample.
pub fn crossing_rate(segment: &Segment, channel: Channel) -> f64 {
    zero_crossings(&segment.channel_values(channel)) as f64 / segment.elapsed()
}

/// Frequency of the strongest nonzero bin of the mean-removed spectrum.
/// Returns 0 when the signal has no oscillating content.
pub fn dominant_frequency(signal: &[f64], sample_rate_hz: f64) -> Result<f64> {
    let n = signal.len();
    if n < 4 {
        return Err(Error::TooShort { needed: 4, got: n });
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(format!("sample rate must be > 0, got {sample_rate_hz}")));
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let scale: f64 = signal.iter().map(|x| x.abs()).sum::<f64>().max(1.0);
    let mut best = (0usize, 0.0f64);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let mag = c.norm();
        if mag > best.1 {
            best = (k, mag);
        }
    }
    if best.1 <= 1e-10 * scale {
        return Ok(0.0);
    }
    Ok(best.0 as f64 * sample_rate_hz / n as f64)
}

/// Writes one row per segment: the 42 features followed by
/// `label,subject_id,movement_class`.
pub fn write_feature_csv(path: &Path, segments: &[&Segment], features: &[FeatureVector]) -> Result<()> {
    if segments.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: segments.len(),
            got: features.len(),
        });
    }
    let mut out = FEATURE_NAMES.join(",");
    out.push_str(",label,subject_id,movement_class\n");
    for (seg, fv) in segments.iter().zip(features) {
        for v in fv.values {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{},{}", seg.label(), seg.subject_id(), seg.movement_class());
    }
    fs::write(path, out)?;
    Ok(())
}
