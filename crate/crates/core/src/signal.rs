//! Core time-series types, windowing and the synthetic movement generator.
//!
//! The generator stands in for recorded phone IMU data. Each movement kind is
//! an oscillation on one gyroscope axis (plus accelerometer content for some
//! kinds) with optional Gaussian noise, so downstream statistics such as the
//! x-gyro standard deviation and its zero-crossing rate move predictably with
//! the amplitude and frequency parameters.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Standard gravity, used as the constant accelerometer offset of a phone
/// held in the hand.
pub const GRAVITY: f64 = 9.81;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 50.0;

/// Highest movement class number; classes `1..=DORSIFLEXION_CLASSES` are
/// dorsiflexion variants, the rest are other movements.
pub const MOVEMENT_CLASSES: u8 = 28;
pub const DORSIFLEXION_CLASSES: u8 = 10;

/// Accelerometer response (m/s² per rad/s) of a shake along its axis.
const SHAKE_ACCEL_GAIN: f64 = 2.0;

/// Tolerance used when comparing timestamps against window edges.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Ax,
    Ay,
    Az,
    Gx,
    Gy,
    Gz,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Ax,
        Channel::Ay,
        Channel::Az,
        Channel::Gx,
        Channel::Gy,
        Channel::Gz,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Ax => "ax",
            Channel::Ay => "ay",
            Channel::Az => "az",
            Channel::Gx => "gx",
            Channel::Gy => "gy",
            Channel::Gz => "gz",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn offset(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Binary annotation of a movement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Dorsiflexion,
    Other,
}

impl Label {
    pub fn from_class(movement_class: u8) -> Label {
        if (1..=DORSIFLEXION_CLASSES).contains(&movement_class) {
            Label::Dorsiflexion
        } else {
            Label::Other
        }
    }

    pub fn is_dorsiflexion(self) -> bool {
        self == Label::Dorsiflexion
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Dorsiflexion => "dorsiflexion",
            Label::Other => "other",
        }
    }

    /// Class used for a segment whose annotation carries only the binary
    /// label.
    pub fn default_class(self) -> u8 {
        match self {
            Label::Dorsiflexion => 1,
            Label::Other => DORSIFLEXION_CLASSES + 1,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dorsiflexion" => Ok(Label::Dorsiflexion),
            "other" => Ok(Label::Other),
            other => Err(Error::invalid(format!(
                "label must be `dorsiflexion` or `other`, got `{other}`"
            ))),
        }
    }
}

/// One timestamped 6-axis reading: accelerometer in m/s², gyroscope in rad/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorSample {
    pub t: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub gx: f64,
    pub gy: f64,
    pub gz: f64,
}

impl SensorSample {
    pub fn from_array(t: f64, values: [f64; 6]) -> Self {
        let [ax, ay, az, gx, gy, gz] = values;
        SensorSample {
            t,
            ax,
            ay,
            az,
            gx,
            gy,
            gz,
        }
    }

    pub fn values(&self) -> [f64; 6] {
        [self.ax, self.ay, self.az, self.gx, self.gy, self.gz]
    }

    pub fn channel(&self, channel: Channel) -> f64 {
        self.values()[channel.index()]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t.is_finite() || self.t < 0.0 {
            return Err(Error::Range(format!(
                "timestamp must be finite and >= 0, got {}",
                self.t
            )));
        }
        if let Some(ch) = Channel::ALL
            .iter()
            .find(|ch| !self.channel(**ch).is_finite())
        {
            return Err(Error::Range(format!(
                "non-finite {ch} value at t={}",
                self.t
            )));
        }
        Ok(())
    }
}

/// A labeled, contiguous run of samples covering one movement instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    samples: Vec<SensorSample>,
    subject_id: String,
    movement_class: u8,
    sample_rate_hz: f64,
}

impl Segment {
    pub fn new(
        samples: Vec<SensorSample>,
        subject_id: impl Into<String>,
        movement_class: u8,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::TooShort {
                needed: 2,
                got: samples.len(),
            });
        }
        if !(1..=MOVEMENT_CLASSES).contains(&movement_class) {
            return Err(Error::invalid(format!(
                "movement class must lie in 1..={MOVEMENT_CLASSES}, got {movement_class}"
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::invalid(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        for s in &samples {
            s.validate()?;
        }
        if let Some(w) = samples.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(Error::Range(format!(
                "timestamps must be strictly increasing within a segment ({} then {})",
                w[0].t, w[1].t
            )));
        }
        Ok(Segment {
            samples,
            subject_id: subject_id.into(),
            movement_class,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[SensorSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn movement_class(&self) -> u8 {
        self.movement_class
    }

    pub fn label(&self) -> Label {
        Label::from_class(self.movement_class)
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channel_values(&self, channel: Channel) -> Vec<f64> {
        self.samples.iter().map(|s| s.channel(channel)).collect()
    }

    /// Time covered by the samples, counting one sample period for the last
    /// reading (`n / sample_rate` for uniformly sampled data).
    pub fn duration(&self) -> f64 {
        span(&self.samples, self.sample_rate_hz)
    }

    /// Seconds between the first and last sample.
    pub fn elapsed(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }

    /// Same segment with every timestamp moved by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> Result<Segment> {
        let samples = self
            .samples
            .iter()
            .map(|s| SensorSample { t: s.t + dt, ..*s })
            .collect();
        Segment::new(
            samples,
            self.subject_id.clone(),
            self.movement_class,
            self.sample_rate_hz,
        )
    }
}

fn span(samples: &[SensorSample], sample_rate_hz: f64) -> f64 {
    match (samples.first(), samples.last()) {
        (Some(first), Some(last)) => last.t - first.t + 1.0 / sample_rate_hz,
        _ => 0.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MovementKind {
    Dorsiflexion,
    Rotation,
    Shake,
    Still,
}

impl MovementKind {
    pub fn default_class(self) -> u8 {
        match self {
            MovementKind::Dorsiflexion => 1,
            MovementKind::Rotation => 11,
            MovementKind::Shake => 17,
            MovementKind::Still => 27,
        }
    }
}

/// Parameters of one synthetic movement.
///
/// `dominant_axis` selects the oscillation axis for rotations and shakes;
/// dorsiflexion always oscillates on the x gyroscope axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisParams {
    pub kind: MovementKind,
    /// Peak gyroscope magnitude in rad/s.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub duration_s: f64,
    pub noise_std: f64,
    pub dominant_axis: Axis,
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub subject_id: String,
    pub movement_class: u8,
}

impl SynthesisParams {
    pub fn new(kind: MovementKind) -> Self {
        SynthesisParams {
            kind,
            amplitude: 0.0,
            frequency_hz: 1.0,
            duration_s: 1.0,
            noise_std: 0.0,
            dominant_axis: Axis::X,
            seed: 0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            subject_id: "synthetic".to_string(),
            movement_class: kind.default_class(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.amplitude.is_finite() && self.amplitude >= 0.0, "amplitude must be >= 0"),
            (self.frequency_hz.is_finite() && self.frequency_hz > 0.0, "frequency_hz must be > 0"),
            (self.duration_s.is_finite() && self.duration_s > 0.0, "duration_s must be > 0"),
            (self.noise_std.is_finite() && self.noise_std >= 0.0, "noise_std must be >= 0"),
            (
                self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0,
                "sample_rate_hz must be > 0",
            ),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(Error::invalid(*msg));
        }
        let dorsiflexion_class = Label::from_class(self.movement_class).is_dorsiflexion();
        if dorsiflexion_class != (self.kind == MovementKind::Dorsiflexion) {
            return Err(Error::invalid(format!(
                "movement class {} is inconsistent with kind {:?}",
                self.movement_class, self.kind
            )));
        }
        Ok(())
    }
}

/// Generates one movement. Pure function of `params` (including the seed).
pub fn synthesize(params: &SynthesisParams) -> Result<Segment> {
    params.validate()?;
    let rate = params.sample_rate_hz;
    let n = (params.duration_s * rate).round() as usize;
    if n < 2 {
        return Err(Error::invalid(format!(
            "duration {} s at {} Hz yields fewer than 2 samples",
            params.duration_s, rate
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_std)
        .map_err(|e| Error::invalid(format!("noise_std: {e}")))?;
    let omega = 2.0 * PI * params.frequency_hz;

    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let wave = params.amplitude * (omega * t).sin();
            let mut v = [0.0; 6];
            match params.kind {
                MovementKind::Dorsiflexion => {
                    v[Channel::Az.index()] = GRAVITY;
                    v[Channel::Gx.index()] = wave;
                }
                MovementKind::Rotation => {
                    v[Channel::Az.index()] = GRAVITY;
                    v[3 + params.dominant_axis.offset()] = wave;
                }
                MovementKind::Shake => {
                    v[Channel::Az.index()] = GRAVITY;
                    v[params.dominant_axis.offset()] += SHAKE_ACCEL_GAIN * wave;
                    v[3 + params.dominant_axis.offset()] = wave;
                }
                MovementKind::Still => {}
            }
            if params.noise_std > 0.0 {
                for x in v.iter_mut() {
                    *x += noise.sample(&mut rng);
                }
            }
            SensorSample::from_array(t, v)
        })
        .collect();

    Segment::new(
        samples,
        params.subject_id.clone(),
        params.movement_class,
        rate,
    )
}

/// Index ranges of the windows `[t0 + k*stride, t0 + k*stride + length)`
/// that fit entirely inside the recording. A trailing partial window is
/// dropped, as is any window holding fewer than two samples.
pub fn window_ranges(
    samples: &[SensorSample],
    sample_rate_hz: f64,
    length_s: f64,
    stride_s: f64,
) -> Result<Vec<Range<usize>>> {
    if !(length_s.is_finite() && length_s > 0.0) {
        return Err(Error::invalid(format!("window length must be > 0, got {length_s}")));
    }
    if !(stride_s.is_finite() && stride_s > 0.0) {
        return Err(Error::invalid(format!("window stride must be > 0, got {stride_s}")));
    }
    if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
        return Err(Error::invalid(format!("sample rate must be > 0, got {sample_rate_hz}")));
    }
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let t0 = first.t;
    let total = span(samples, sample_rate_hz);

    let mut out = Vec::new();
    let mut lo = 0usize;
    for k in 0.. {
        let start = k as f64 * stride_s;
        if start + length_s > total + TIME_EPS {
            break;
        }
        let (ws, we) = (t0 + start - TIME_EPS, t0 + start + length_s - TIME_EPS);
        while lo < samples.len() && samples[lo].t < ws {
            lo += 1;
        }
        let hi = lo + samples[lo..].partition_point(|s| s.t < we);
        if hi - lo >= 2 {
            out.push(lo..hi);
        }
    }
    Ok(out)
}

/// Splits a segment into fixed-length windows; each window inherits the
/// segment's subject, class and sample rate.
pub fn window(segment: &Segment, length_s: f64, stride_s: f64) -> Result<Vec<Segment>> {
    window_ranges(segment.samples(), segment.sample_rate_hz, length_s, stride_s)?
        .into_iter()
        .map(|r| {
            Segment::new(
                segment.samples[r].to_vec(),
                segment.subject_id.clone(),
                segment.movement_class,
                segment.sample_rate_hz,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop_std(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    fn still(duration_s: f64) -> Segment {
        let mut p = SynthesisParams::new(MovementKind::Still);
        p.duration_s = duration_s;
        synthesize(&p).unwrap()
    }

    #[test]
    fn zero_noise_still_is_all_zero() {
        let seg = still(1.0);
        assert_eq!(seg.len(), 50);
        assert!(seg.samples().iter().all(|s| s.values() == [0.0; 6]));
        assert_eq!(seg.label(), Label::Other);
    }

    #[test]
    fn dorsiflexion_sinusoid_std() {
        let mut p = SynthesisParams::new(MovementKind::Dorsiflexion);
        p.amplitude = 3.0;
        p.frequency_hz = 2.0;
        let seg = synthesize(&p).unwrap();
        let gx = seg.channel_values(Channel::Gx);
        assert!((pop_std(&gx) - 3.0 / 2f64.sqrt()).abs() < 1e-12);
        let peak = gx.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!((peak - 3.0).abs() < 0.05);
        assert!(seg.channel_values(Channel::Az).iter().all(|&a| a == GRAVITY));
        assert_eq!(seg.label(), Label::Dorsiflexion);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let mut p = SynthesisParams::new(MovementKind::Shake);
        p.amplitude = 1.5;
        p.frequency_hz = 5.0;
        p.noise_std = 0.3;
        p.dominant_axis = Axis::Y;
        p.seed = 99;
        let a = synthesize(&p).unwrap();
        let b = synthesize(&p).unwrap();
        let bits = |s: &Segment| -> Vec<u64> {
            s.samples()
                .iter()
                .flat_map(|x| x.values().map(f64::to_bits))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
        p.seed = 100;
        assert_ne!(bits(&a), bits(&synthesize(&p).unwrap()));
    }

    #[test]
    fn still_noise_is_zero_mean() {
        let mut p = SynthesisParams::new(MovementKind::Still);
        p.duration_s = 200.0;
        p.noise_std = 0.5;
        p.seed = 3;
        let seg = synthesize(&p).unwrap();
        for ch in Channel::ALL {
            let v = seg.channel_values(ch);
            let m = v.iter().sum::<f64>() / v.len() as f64;
            assert!(m.abs() < 0.05, "{ch} mean {m}");
        }
    }

    #[test]
    fn rotation_uses_dominant_axis() {
        let mut p = SynthesisParams::new(MovementKind::Rotation);
        p.amplitude = 2.0;
        p.dominant_axis = Axis::Z;
        let seg = synthesize(&p).unwrap();
        assert!(pop_std(&seg.channel_values(Channel::Gz)) > 1.0);
        assert_eq!(pop_std(&seg.channel_values(Channel::Gx)), 0.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = SynthesisParams::new(MovementKind::Dorsiflexion);
        p.frequency_hz = 0.0;
        assert!(matches!(synthesize(&p), Err(Error::InvalidParameter(_))));
        let mut p = SynthesisParams::new(MovementKind::Dorsiflexion);
        p.amplitude = -1.0;
        assert!(synthesize(&p).is_err());
        let mut p = SynthesisParams::new(MovementKind::Rotation);
        p.movement_class = 4;
        assert!(synthesize(&p).is_err());
    }

    #[test]
    fn window_counts() {
        let ten = still(10.0);
        assert_eq!(window(&ten, 2.0, 1.0).unwrap().len(), 9);
        assert_eq!(window(&still(1.5), 2.0, 1.0).unwrap().len(), 0);
        let two = window(&still(2.0), 2.0, 1.0).unwrap();
        assert_eq!(two.len(), 1);
        assert_eq!(two[0].len(), 100);
    }

    #[test]
    fn windows_stay_inside_input() {
        let seg = still(7.3);
        let last_t = seg.samples().last().unwrap().t;
        for w in window(&seg, 1.7, 0.4).unwrap() {
            assert!(w.samples().last().unwrap().t <= last_t);
            assert_eq!(w.subject_id(), seg.subject_id());
        }
    }

    #[test]
    fn empty_input_gives_no_windows() {
        assert!(window_ranges(&[], 50.0, 1.0, 1.0).unwrap().is_empty());
        assert!(window_ranges(&[], 50.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn segment_invariants() {
        let s = |t| SensorSample::from_array(t, [0.0; 6]);
        assert!(Segment::new(vec![s(0.0)], "a", 1, 50.0).is_err());
        assert!(Segment::new(vec![s(0.0), s(0.0)], "a", 1, 50.0).is_err());
        assert!(Segment::new(vec![s(0.0), s(0.1)], "a", 29, 50.0).is_err());
        let mut bad = s(0.1);
        bad.gy = f64::NAN;
        assert!(Segment::new(vec![s(0.0), bad], "a", 1, 50.0).is_err());
        assert_eq!(Label::from_class(10), Label::Dorsiflexion);
        assert_eq!(Label::from_class(11), Label::Other);
    }
}
