//! Time-aligned f0 tracks.

use serde::Serialize;

use crate::error::{FcpeError, Result};

/// Frame-synchronous f0 estimates on a uniform time grid. `f0 == 0` marks an
/// unvoiced frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    start: f64,
    period: f64,
    f0: Vec<f64>,
    confidence: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackRow {
    pub time_s: f64,
    pub f0_hz: f64,
    pub confidence: f64,
}

impl PitchTrack {
    /// Track starting at `start` seconds with one frame every `period` seconds.
    pub fn uniform(start: f64, period: f64, f0: Vec<f64>, confidence: Option<Vec<f64>>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) || !start.is_finite() {
            return Err(FcpeError::Domain(format!(
                "frame period must be positive and finite (start {start}, period {period})"
            )));
        }
        if let Some(c) = &confidence {
            if c.len() != f0.len() {
                return Err(FcpeError::Shape(format!(
                    "confidence has {} frames but f0 has {}",
                    c.len(),
                    f0.len()
                )));
            }
            if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(FcpeError::Domain("confidence outside [0, 1]".into()));
            }
        }
        if f0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(FcpeError::Domain("f0 must be finite and >= 0".into()));
        }
        Ok(Self {
            start,
            period,
            f0,
            confidence,
        })
    }

    /// Builds a track from explicit timestamps, which must be uniform within 1e-9 s.
    pub fn from_times(times: &[f64], f0: Vec<f64>, confidence: Option<Vec<f64>>) -> Result<Self> {
        if times.len() != f0.len() {
            return Err(FcpeError::Shape(format!(
                "{} timestamps but {} f0 values",
                times.len(),
                f0.len()
            )));
        }
        match times.len() {
            0 => Self::uniform(0.0, 0.01, f0, confidence),
            1 => Self::uniform(times[0], 0.01, f0, confidence),
            n => {
                let period = (times[n - 1] - times[0]) / (n - 1) as f64;
                for (i, &t) in times.iter().enumerate() {
                    if (t - (times[0] + i as f64 * period)).abs() > 1e-9 {
                        return Err(FcpeError::Format {
                            chunk: "times".into(),
                            message: format!("timestamp {i} ({t}) is off the uniform grid"),
                        });
                    }
                }
                Self::uniform(times[0], period, f0, confidence)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.period
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn f0(&self) -> &[f64] {
        &self.f0
    }

    pub fn confidence(&self) -> Option<&[f64]> {
        self.confidence.as_deref()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.period
    }

    /// Index of the frame nearest to `t`, or `None` if `t` lies more than half
    /// a frame outside the track.
    pub fn nearest_frame(&self, t: f64) -> Option<usize> {
        if self.is_empty() {
            return None;
        }
        let pos = ((t - self.start) / self.period).round();
        let last = (self.len() - 1) as f64;
        let idx = pos.clamp(0.0, last);
        if (t - self.time(idx as usize)).abs() > 0.5 * self.period + 1e-9 {
            return None;
        }
        Some(idx as usize)
    }

    /// f0 at time `t` by nearest-frame lookup; outside the track counts as unvoiced.
    pub fn f0_at(&self, t: f64) -> f64 {
        self.nearest_frame(t).map_or(0.0, |i| self.f0[i])
    }

    /// Resamples onto a new uniform grid by nearest-time lookup.
    pub fn resample_nearest(&self, start: f64, period: f64, frames: usize) -> Result<Self> {
        let f0 = (0..frames).map(|i| self.f0_at(start + i as f64 * period)).collect();
        let confidence = self.confidence.as_ref().map(|c| {
            (0..frames)
                .map(|i| self.nearest_frame(start + i as f64 * period).map_or(0.0, |j| c[j]))
                .collect()
        });
        Self::uniform(start, period, f0, confidence)
    }

    pub fn rows(&self) -> impl Iterator<Item = TrackRow> + '_ {
        (0..self.len()).map(move |i| TrackRow {
            time_s: self.time(i),
            f0_hz: self.f0[i],
            confidence: self.confidence.as_ref().map_or(0.0, |c| c[i]),
        })
    }

    /// CSV with header `time_s,f0_hz,confidence`, six decimal places.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,f0_hz,confidence\n");
        for r in self.rows() {
            out.push_str(&format!("{:.6},{:.6},{:.6}\n", r.time_s, r.f0_hz, r.confidence));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<TrackRow> = self.rows().collect();
        serde_json::to_string_pretty(&rows).expect("track rows serialize")
    }
}
