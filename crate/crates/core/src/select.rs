//! Greedy temporal non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::MergedRanking;
use crate::timeline::{EvidenceInterval, FrameTimeline, TIME_EPS};

/// Final frames for one query. Also the record format of a selections file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub question_id: String,
    pub k: usize,
    pub tau: f64,
    /// Selected timestamps in temporal order, as handed to an answerer.
    pub timestamps: Vec<f64>,
    /// The same timestamps in the order they were picked (best first).
    pub pick_order: Vec<f64>,
}

impl SelectionResult {
    pub fn from_picks(question_id: impl Into<String>, k: usize, tau: f64, picks: Vec<f64>) -> Self {
        let mut timestamps = picks.clone();
        timestamps.sort_by(f64::total_cmp);
        Self {
            question_id: question_id.into(),
            k,
            tau,
            timestamps,
            pick_order: picks,
        }
    }

    pub fn len(&self) -> usize {
        self.pick_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pick_order.is_empty()
    }
}

/// Walks the ranking best-first and accepts a frame iff it lies at least
/// `tau` seconds from every frame accepted so far, stopping after `k` picks.
/// May return fewer than `k` frames.
pub fn greedy_nms(
    question_id: &str,
    ranking: &MergedRanking,
    timeline: &FrameTimeline,
    k: usize,
    tau: f64,
) -> Result<SelectionResult> {
    if k == 0 {
        return Err(Error::invalid("frame budget k must be at least 1"));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    let mut picks: Vec<f64> = Vec::with_capacity(k);
    for &frame in &ranking.order {
        let t = timeline.time_of(frame);
        if picks.iter().all(|&p| (t - p).abs() >= tau - TIME_EPS) {
            picks.push(t);
            if picks.len() == k {
                break;
            }
        }
    }
    Ok(SelectionResult::from_picks(question_id, k, tau, picks))
}

/// Largest number of `tau`-separated timestamps that fit in the closed
/// interval, capped at the frame budget: `min(k, floor(len / tau) + 1)`.
pub fn max_capacity(interval: &EvidenceInterval, tau: f64, k: usize) -> Result<usize> {
    interval.validate()?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if k == 0 {
        return Err(Error::invalid("frame budget k must be at least 1"));
    }
    let fit = ((interval.length() + TIME_EPS) / tau).floor() as usize + 1;
    Ok(fit.min(k))
}
