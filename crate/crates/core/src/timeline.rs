//! Sampled frame grid of a video and the temporal-gap rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance used for every comparison between times in seconds.
pub const TIME_EPS: f64 = 1e-6;

/// Upper bound on the temporal gap, in seconds.
pub const MAX_TAU_S: f64 = 10.0;

/// Uniformly sampled frame timestamps of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTimeline {
    pub video_id: String,
    pub duration_s: f64,
    pub fps: f64,
    timestamps: Vec<f64>,
}

impl FrameTimeline {
    /// Builds the grid `0, 1/fps, 2/fps, ...` up to and excluding `duration_s`.
    pub fn build(video_id: impl Into<String>, duration_s: f64, fps: f64) -> Result<Self> {
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(Error::invalid(format!(
                "duration must be positive, got {duration_s}"
            )));
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::invalid(format!("fps must be positive, got {fps}")));
        }
        let n = frame_count(duration_s, fps);
        let timestamps = (0..n).map(|i| i as f64 / fps).collect();
        Ok(Self {
            video_id: video_id.into(),
            duration_s,
            fps,
            timestamps,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn time_of(&self, frame: usize) -> f64 {
        self.timestamps[frame]
    }

    /// Index of the grid frame nearest to `t`; exact halfway points resolve to
    /// the earlier frame. Out-of-range times clamp to the first or last frame.
    pub fn nearest_frame(&self, t: f64) -> usize {
        let x = t * self.fps;
        let idx = (x - 0.5).ceil();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.len() - 1)
        }
    }

    /// Index of the frame whose timestamp equals `t` within [`TIME_EPS`].
    pub fn frame_at(&self, t: f64) -> Option<usize> {
        let i = self.nearest_frame(t);
        ((self.timestamps[i] - t).abs() <= TIME_EPS).then_some(i)
    }

    /// Indices of the frames lying inside the closed interval.
    pub fn frames_in(&self, interval: &EvidenceInterval) -> std::ops::Range<usize> {
        let lo = self
            .timestamps
            .partition_point(|&t| t < interval.start_s - TIME_EPS);
        let hi = self
            .timestamps
            .partition_point(|&t| t <= interval.end_s + TIME_EPS);
        lo..hi.max(lo)
    }
}

/// Number of frames on the grid for a video of `duration_s` sampled at `fps`.
pub fn frame_count(duration_s: f64, fps: f64) -> usize {
    let x = duration_s * fps;
    let r = x.round();
    let n = if (x - r).abs() <= TIME_EPS {
        r
    } else {
        x.floor()
    };
    (n as usize).max(1)
}

/// Ground-truth time span of the evidence for a query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl EvidenceInterval {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        let iv = Self { start_s, end_s };
        iv.validate()?;
        Ok(iv)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) {
            return Err(Error::invalid("interval bounds must be finite"));
        }
        if self.start_s < 0.0 || self.start_s >= self.end_s {
            return Err(Error::invalid(format!(
                "degenerate interval [{}, {}]",
                self.start_s, self.end_s
            )));
        }
        Ok(())
    }

    /// Validates the interval against a video of the given duration.
    pub fn validate_within(&self, duration_s: f64) -> Result<()> {
        self.validate()?;
        if self.end_s > duration_s + TIME_EPS {
            return Err(Error::invalid(format!(
                "interval end {} exceeds video duration {duration_s}",
                self.end_s
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        in_interval(t, self)
    }
}

/// Closed-interval membership: `start <= t <= end`.
pub fn in_interval(t: f64, interval: &EvidenceInterval) -> bool {
    t >= interval.start_s - TIME_EPS && t <= interval.end_s + TIME_EPS
}

/// Minimum temporal gap between selected frames: `min(D / 2K, 10)` seconds,
/// where `D` is the full video duration.
pub fn compute_tau(duration_s: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("frame budget k must be at least 1"));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!(
            "duration must be positive, got {duration_s}"
        )));
    }
    Ok((duration_s / (2.0 * k as f64)).min(MAX_TAU_S))
}
