use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Segment;

/// Number of time steps of a CNN input window.
pub const WINDOW_LEN: usize = 128;
pub const WINDOW_CHANNELS: usize = 6;

/// Fixed-shape raw input: 128 time steps × 6 channels
/// (`ax, ay, az, gx, gy, gz`), row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawWindow(Array2<f64>);

impl RawWindow {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.dim() != (WINDOW_LEN, WINDOW_CHANNELS) {
            return Err(Error::invalid(format!(
                "raw window must be {WINDOW_LEN} x {WINDOW_CHANNELS}, got {} x {}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("raw window contains non-finite values".into()));
        }
        Ok(RawWindow(data.as_standard_layout().into_owned()))
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.0
    }

    /// Row-major values, time-major then channel.
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("standard layout")
    }
}

/// Linearly interpolates every channel onto 128 evenly spaced instants from
/// the first to the last sample.
pub fn resample_to_window(segment: &Segment) -> Result<RawWindow> {
    let samples = segment.samples();
    if samples.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: samples.len(),
        });
    }
    let t0 = samples[0].t;
    let t1 = samples[samples.len() - 1].t;
    let mut out = Array2::zeros((WINDOW_LEN, WINDOW_CHANNELS));
    let mut seg = 0usize;
    for j in 0..WINDOW_LEN {
        let tau = if j == WINDOW_LEN - 1 {
            t1
        } else {
            t0 + (t1 - t0) * j as f64 / (WINDOW_LEN - 1) as f64
        };
        while seg + 2 < samples.len() && samples[seg + 1].t < tau {
            seg += 1;
        }
        let (a, b) = (&samples[seg], &samples[seg + 1]);
        let w = ((tau - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        let (va, vb) = (a.values(), b.values());
        for c in 0..WINDOW_CHANNELS {
            out[[j, c]] = if w == 0.0 {
                va[c]
            } else if w == 1.0 {
                vb[c]
            } else {
                va[c] + w * (vb[c] - va[c])
            };
        }
    }
    RawWindow::new(out)
}
