//! Rule-based difficulty adjustment for the shake exercise.
//!
//! Two thresholds are tracked independently: one on the range-of-motion
//! indicator (std of the x gyroscope) and one on movement speed (zero
//! crossings per second). Five calibration shakes set both thresholds. After
//! that, shakes are grouped into disjoint epochs of ten; at the end of each
//! epoch a threshold is raised when at least 90% of the shakes reached it and
//! lowered when fewer than 60% did.
//!
//! A raise never goes past the strongest shake of the epoch that triggered
//! it, so a player who repeats the same movement ends up with a threshold
//! equal to that movement instead of oscillating around it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{crossing_rate, rom_indicator};
use crate::models::Predictor;
use crate::signal::{window, Channel, Segment};

pub const EPOCH_LEN: usize = 10;
pub const CALIBRATION_SHAKES: usize = 5;
pub const CALIBRATION_FACTOR: f64 = 0.9;
pub const RAISE_AT: f64 = 0.9;
pub const LOWER_BELOW: f64 = 0.6;
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub floor: f64,
    pub ceiling: f64,
}

impl Bounds {
    pub fn new(floor: f64, ceiling: f64) -> Result<Self> {
        let b = Bounds { floor, ceiling };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        if !(self.floor.is_finite() && self.ceiling.is_finite() && 0.0 < self.floor && self.floor <= self.ceiling) {
            return Err(Error::invalid(format!(
                "bounds must satisfy 0 < floor <= ceiling, got [{}, {}]",
                self.floor, self.ceiling
            )));
        }
        Ok(())
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.floor, self.ceiling)
    }
}

/// Cut points between slow, medium and fast movement, in crossings/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedLevels {
    pub medium_from: f64,
    pub fast_from: f64,
}

impl Default for SpeedLevels {
    fn default() -> Self {
        SpeedLevels {
            medium_from: 2.0,
            fast_from: 5.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedLevel {
    Slow,
    Medium,
    Fast,
}

impl SpeedLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeedLevel::Slow => "slow",
            SpeedLevel::Medium => "medium",
            SpeedLevel::Fast => "fast",
        }
    }
}

impl SpeedLevels {
    pub fn validate(&self) -> Result<()> {
        if !(self.medium_from.is_finite() && self.fast_from.is_finite() && 0.0 <= self.medium_from && self.medium_from <= self.fast_from) {
            return Err(Error::invalid(format!(
                "speed cut points must satisfy 0 <= medium_from <= fast_from, got {} and {}",
                self.medium_from, self.fast_from
            )));
        }
        Ok(())
    }

    /// Half-open bands: `[0, medium_from)` slow, `[medium_from, fast_from)`
    /// medium, the rest fast.
    pub fn level(&self, rate: f64) -> SpeedLevel {
        if rate < self.medium_from {
            SpeedLevel::Slow
        } else if rate < self.fast_from {
            SpeedLevel::Medium
        } else {
            SpeedLevel::Fast
        }
    }
}

pub fn speed_level(rate: f64) -> SpeedLevel {
    SpeedLevels::default().level(rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub step_fraction: f64,
    pub rom_bounds: Bounds,
    pub speed_bounds: Bounds,
    pub speed_levels: SpeedLevels,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            step_fraction: 0.1,
            rom_bounds: Bounds { floor: 0.1, ceiling: 10.0 },
            speed_bounds: Bounds { floor: 0.5, ceiling: 10.0 },
            speed_levels: SpeedLevels::default(),
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_fraction > 0.0 && self.step_fraction < 1.0) {
            return Err(Error::invalid(format!("step_fraction must lie in (0, 1), got {}", self.step_fraction)));
        }
        self.rom_bounds.validate()?;
        self.speed_bounds.validate()?;
        self.speed_levels.validate()
    }
}

/// One registered shake as seen by the game.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShakeEvent {
    pub t: f64,
    pub rom_value: f64,
    pub speed_value: f64,
    pub dorsiflexion: bool,
}

impl ShakeEvent {
    pub fn new(t: f64, rom_value: f64, speed_value: f64, dorsiflexion: bool) -> Result<Self> {
        let e = ShakeEvent {
            t,
            rom_value,
            speed_value,
            dorsiflexion,
        };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t", self.t), ("rom_value", self.rom_value), ("speed_value", self.speed_value)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Range(format!("shake event {name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Raise,
    Lower,
    Hold,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Raise => "raise",
            Direction::Lower => "lower",
            Direction::Hold => "hold",
        }
    }
}

/// One indicator's threshold and the outcomes of the current epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub threshold: f64,
    pub bounds: Bounds,
    /// Outcomes of the shakes registered so far in the open epoch.
    pub outcomes: Vec<bool>,
    /// Largest indicator value of the open epoch.
    pub epoch_max: f64,
}

impl Track {
    fn new(threshold: f64, bounds: Bounds) -> Self {
        Track {
            threshold: bounds.clamp(threshold),
            bounds,
            outcomes: Vec::new(),
            epoch_max: 0.0,
        }
    }

    fn record(&mut self, value: f64) -> bool {
        let ok = value >= self.threshold;
        self.outcomes.push(ok);
        self.epoch_max = self.epoch_max.max(value);
        ok
    }

    /// Closes a full epoch, returning the direction and the success count.
    fn close_epoch(&mut self, step: f64) -> (Direction, usize) {
        let successes = self.outcomes.iter().filter(|&&ok| ok).count();
        let rate = successes as f64 / self.outcomes.len() as f64;
        let (direction, next) = if rate >= RAISE_AT {
            let raised = (self.threshold * (1.0 + step)).min(self.epoch_max);
            (Direction::Raise, raised.max(self.threshold))
        } else if rate < LOWER_BELOW {
            (Direction::Lower, self.threshold * (1.0 - step))
        } else {
            (Direction::Hold, self.threshold)
        };
        self.threshold = self.bounds.clamp(next);
        self.outcomes.clear();
        self.epoch_max = 0.0;
        (direction, successes)
    }
}

/// Summary of one closed epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub epoch: usize,
    pub rom_successes: usize,
    pub speed_successes: usize,
    pub rom: Direction,
    pub speed: Direction,
    pub rom_threshold: f64,
    pub speed_threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifficultyState {
    pub format_version: u32,
    pub calibrated: bool,
    pub step_fraction: f64,
    pub speed_levels: SpeedLevels,
    pub rom: Track,
    pub speed: Track,
    /// Every closed epoch, oldest first.
    pub epochs: Vec<Adjustment>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

impl DifficultyState {
    /// A state with explicit thresholds, e.g. set by a therapist.
    pub fn with_thresholds(rom_threshold: f64, speed_threshold: f64, config: &AdaptiveConfig) -> Result<Self> {
        config.validate()?;
        Ok(DifficultyState {
            format_version: SNAPSHOT_VERSION,
            calibrated: true,
            step_fraction: config.step_fraction,
            speed_levels: config.speed_levels,
            rom: Track::new(rom_threshold, config.rom_bounds),
            speed: Track::new(speed_threshold, config.speed_bounds),
            epochs: Vec::new(),
        })
    }

    /// Thresholds at 90% of the median of the first five dorsiflexion
    /// shakes.
    pub fn calibrate(events: &[ShakeEvent], config: &AdaptiveConfig) -> Result<Self> {
        let mut first: Vec<&ShakeEvent> = events.iter().filter(|e| e.dorsiflexion).take(CALIBRATION_SHAKES).collect();
        if first.len() < CALIBRATION_SHAKES {
            return Err(Error::NotCalibrated);
        }
        for e in &first {
            e.validate()?;
        }
        let mut rom: Vec<f64> = first.iter().map(|e| e.rom_value).collect();
        let mut speed: Vec<f64> = first.drain(..).map(|e| e.speed_value).collect();
        DifficultyState::with_thresholds(
            CALIBRATION_FACTOR * median(&mut rom),
            CALIBRATION_FACTOR * median(&mut speed),
            config,
        )
    }

    pub fn rom_threshold(&self) -> f64 {
        self.rom.threshold
    }

    pub fn speed_threshold(&self) -> f64 {
        self.speed.threshold
    }

    /// Registers one shake and returns the successor state, plus the
    /// adjustment when the shake completed an epoch. Events the classifier
    /// did not recognize as dorsiflexion leave the state unchanged.
    pub fn record_shake(&self, event: &ShakeEvent) -> Result<(DifficultyState, Option<Adjustment>)> {
        let mut next = self.clone();
        let adj = next.apply(event)?;
        Ok((next, adj))
    }

    /// In-place form of [`DifficultyState::record_shake`].
    pub fn apply(&mut self, event: &ShakeEvent) -> Result<Option<Adjustment>> {
        if !self.calibrated {
            return Err(Error::NotCalibrated);
        }
        event.validate()?;
        if !event.dorsiflexion {
            return Ok(None);
        }
        self.rom.record(event.rom_value);
        self.speed.record(event.speed_value);
        if self.rom.outcomes.len() < EPOCH_LEN {
            return Ok(None);
        }
        let (rom, rom_successes) = self.rom.close_epoch(self.step_fraction);
        let (speed, speed_successes) = self.speed.close_epoch(self.step_fraction);
        let adj = Adjustment {
            epoch: self.epochs.len() + 1,
            rom_successes,
            speed_successes,
            rom,
            speed,
            rom_threshold: self.rom.threshold,
            speed_threshold: self.speed.threshold,
        };
        self.epochs.push(adj);
        Ok(Some(adj))
    }

    pub fn speed_level(&self, rate: f64) -> SpeedLevel {
        self.speed_levels.level(rate)
    }

    /// Versioned TOML snapshot, editable by hand.
    pub fn to_snapshot(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("cannot serialize state: {e}")))
    }

    pub fn from_snapshot(text: &str) -> Result<Self> {
        let state: DifficultyState = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<snapshot>".into(),
            line: e.span().map(|s| text[..s.start].lines().count().max(1)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        if state.format_version != SNAPSHOT_VERSION {
            return Err(Error::Range(format!(
                "unsupported state snapshot version {} (this build reads version {SNAPSHOT_VERSION})",
                state.format_version
            )));
        }
        for (name, track) in [("rom", &state.rom), ("speed", &state.speed)] {
            track.bounds.validate()?;
            if !(track.threshold >= track.bounds.floor && track.threshold <= track.bounds.ceiling) {
                return Err(Error::Range(format!(
                    "{name} threshold {} lies outside [{}, {}]",
                    track.threshold, track.bounds.floor, track.bounds.ceiling
                )));
            }
            if track.outcomes.len() >= EPOCH_LEN {
                return Err(Error::Range(format!("{name} history holds more than {} outcomes", EPOCH_LEN - 1)));
            }
        }
        if state.rom.outcomes.len() != state.speed.outcomes.len() {
            return Err(Error::Range("rom and speed histories differ in length".into()));
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_snapshot()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        DifficultyState::from_snapshot(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }
}

/// Least-squares line mapping the ROM indicator to an ordinal restriction
/// level (0 fully restricted, 1 half, 2 free).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomRegression {
    pub slope: f64,
    pub intercept: f64,
}

impl RomRegression {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::TooShort { needed: 2, got: x.len() });
        }
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        if sxx == 0.0 {
            return Err(Error::Degenerate("all indicator values are equal".into()));
        }
        let slope = sxy / sxx;
        Ok(RomRegression {
            slope,
            intercept: my - slope * mx,
        })
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn rmse(&self, x: &[f64], y: &[f64]) -> f64 {
        let se: f64 = x.iter().zip(y).map(|(&a, &b)| (self.predict(a) - b).powi(2)).sum();
        (se / x.len() as f64).sqrt()
    }
}

/// Root mean squared error of leave-one-out predictions.
pub fn rom_loocv_rmse(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::TooShort { needed: 3, got: x.len() });
    }
    let mut se = 0.0;
    for held in 0..x.len() {
        let (xs, ys): (Vec<f64>, Vec<f64>) = x
            .iter()
            .zip(y)
            .enumerate()
            .filter(|&(i, _)| i != held)
            .map(|(_, (&a, &b))| (a, b))
            .unzip();
        let line = RomRegression::fit(&xs, &ys)?;
        se += (line.predict(x[held]) - y[held]).powi(2);
    }
    Ok((se / x.len() as f64).sqrt())
}

/// A simulated player answering one prompt per second.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerModel {
    pub rom_capability: f64,
    pub speed_capability: f64,
    pub noise_std: f64,
    /// Probability of attempting a shake when prompted.
    pub compliance: f64,
    pub seed: u64,
}

impl PlayerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rom_capability > 0.0 && self.speed_capability > 0.0) {
            return Err(Error::invalid("player capabilities must be > 0"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::invalid("player noise_std must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.compliance) {
            return Err(Error::invalid("player compliance must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One prompt of a simulated session.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SessionStep {
    pub event: Option<ShakeEvent>,
    pub rom_threshold: f64,
    pub speed_threshold: f64,
    pub adjustment: Option<Adjustment>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub steps: Vec<SessionStep>,
    pub final_state: DifficultyState,
}

impl Session {
    /// Threshold pair after each closed epoch, starting with the initial one.
    pub fn epoch_thresholds(&self, initial: &DifficultyState) -> Vec<(f64, f64)> {
        std::iter::once((initial.rom_threshold(), initial.speed_threshold()))
            .chain(self.steps.iter().filter_map(|s| s.adjustment).map(|a| (a.rom_threshold, a.speed_threshold)))
            .collect()
    }

    /// `t,rom_value,speed_value,dorsiflexion,rom_threshold,speed_threshold`,
    /// one row per registered shake, thresholds as they stand after it.
    pub fn log_csv(&self) -> String {
        let mut out = String::from("t,rom_value,speed_value,dorsiflexion,rom_threshold,speed_threshold\n");
        for s in &self.steps {
            if let Some(e) = s.event {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    e.t, e.rom_value, e.speed_value, e.dorsiflexion, s.rom_threshold, s.speed_threshold
                );
            }
        }
        out
    }
}

/// One row per closed epoch: success counts, directions and the thresholds
/// that result.
pub fn adjustments_csv(adjustments: &[Adjustment]) -> String {
    let mut out = String::from("epoch,rom_successes,speed_successes,rom,speed,rom_threshold,speed_threshold\n");
    for a in adjustments {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            a.epoch,
            a.rom_successes,
            a.speed_successes,
            a.rom.as_str(),
            a.speed.as_str(),
            a.rom_threshold,
            a.speed_threshold
        );
    }
    out
}

const EVENT_COLUMNS: [&str; 4] = ["t", "rom_value", "speed_value", "dorsiflexion"];

/// `t,rom_value,speed_value,dorsiflexion`, one row per event.
pub fn events_to_csv(events: &[ShakeEvent]) -> String {
    let mut out = EVENT_COLUMNS.join(",");
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.rom_value, e.speed_value, e.dorsiflexion);
    }
    out
}

/// Reads shake events from CSV text. Columns are located by header name, so
/// session logs (which carry extra threshold columns) are accepted too.
pub fn parse_events_csv(text: &str, path: &Path) -> Result<Vec<ShakeEvent>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let cols = EVENT_COLUMNS
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| err(1, format!("missing column `{c}`")))
        })
        .collect::<Result<Vec<usize>>>()?;
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != names.len() {
                return Err(err(i + 1, format!("expected {} fields, got {}", names.len(), fields.len())));
            }
            let num = |k: usize| {
                fields[cols[k]]
                    .parse::<f64>()
                    .map_err(|_| err(i + 1, format!("`{}` is not a number", fields[cols[k]])))
            };
            let dorsiflexion = match fields[cols[3]] {
                "true" | "1" => true,
                "false" | "0" => false,
                other => return Err(err(i + 1, format!("`{other}` is not a boolean"))),
            };
            ShakeEvent::new(num(0)?, num(1)?, num(2)?, dorsiflexion).map_err(|e| err(i + 1, e.to_string()))
        })
        .collect()
}

pub fn read_events(path: &Path) -> Result<Vec<ShakeEvent>> {
    parse_events_csv(&fs::read_to_string(path)?, path)
}

/// Runs `n_prompts` one-second prompts against `state`. Indicator values are
/// the player's capabilities plus Gaussian noise, floored at zero.
pub fn simulate_session(player: &PlayerModel, state: &DifficultyState, n_prompts: usize) -> Result<Session> {
    player.validate()?;
    if n_prompts < EPOCH_LEN {
        return Err(Error::invalid(format!("a session needs at least {EPOCH_LEN} prompts, got {n_prompts}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(player.seed);
    let noise = Normal::new(0.0, player.noise_std).map_err(|e| Error::invalid(e.to_string()))?;
    let mut state = state.clone();
    let mut steps = Vec::with_capacity(n_prompts);
    for i in 0..n_prompts {
        let attempts = rng.random::<f64>() < player.compliance;
        let (event, adjustment) = if attempts {
            let mut draw = |c: f64| {
                let v = if player.noise_std > 0.0 { c + noise.sample(&mut rng) } else { c };
                v.max(0.0)
            };
            let rom = draw(player.rom_capability);
            let speed = draw(player.speed_capability);
            let e = ShakeEvent::new(i as f64, rom, speed, true)?;
            (Some(e), state.apply(&e)?)
        } else {
            (None, None)
        };
        steps.push(SessionStep {
            event,
            rom_threshold: state.rom_threshold(),
            speed_threshold: state.speed_threshold(),
            adjustment,
        });
    }
    Ok(Session { steps, final_state: state })
}

/// Live detection: classifies a recording once per `cadence_s` over windows
/// of `window_s`, producing one shake event per window with both indicators.
pub fn detect_shakes<P: Predictor<Segment>>(
    model: &P,
    recording: &Segment,
    window_s: f64,
    cadence_s: f64,
) -> Result<Vec<ShakeEvent>> {
    let t0 = recording.samples()[0].t;
    window(recording, window_s, cadence_s)?
        .iter()
        .map(|w| {
            let verdict = model.predict(w)?;
            ShakeEvent::new(
                w.samples()[0].t - t0 + window_s,
                rom_indicator(w)?,
                crossing_rate(w, Channel::Gx),
                verdict.label.is_dorsiflexion(),
            )
        })
        .collect()
}
