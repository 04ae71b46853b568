//! Reference selectors: uniform, oracle, single-query and blind.

use crate::error::Result;
use crate::eval::QueryItem;
use crate::merge::{finalize_ranking, scores_to_ranks, MergeMode, ScoreVector};
use crate::plan::ToolKind;
use crate::providers::Scorer;
use crate::select::{greedy_nms, SelectionResult};
use crate::timeline::{compute_tau, EvidenceInterval, FrameTimeline};

fn snap_unique(
    timeline: &FrameTimeline,
    targets: impl Iterator<Item = f64>,
    lo: usize,
    hi: usize,
) -> Vec<f64> {
    let mut frames: Vec<usize> = Vec::new();
    for t in targets {
        let f = timeline.nearest_frame(t).clamp(lo, hi);
        if !frames.contains(&f) {
            frames.push(f);
        }
    }
    frames.into_iter().map(|f| timeline.time_of(f)).collect()
}

/// `k` segment midpoints over the whole video, snapped to the grid.
pub fn uniform_baseline(
    question_id: &str,
    timeline: &FrameTimeline,
    k: usize,
) -> Result<SelectionResult> {
    let tau = compute_tau(timeline.duration_s, k)?;
    let picks = if k >= timeline.len() {
        timeline.timestamps().to_vec()
    } else {
        let d = timeline.duration_s;
        snap_unique(
            timeline,
            (0..k).map(|i| (i as f64 + 0.5) * d / k as f64),
            0,
            timeline.len() - 1,
        )
    };
    Ok(SelectionResult::from_picks(question_id, k, tau, picks))
}

/// `k` midpoints inside the ground-truth interval, snapped to grid frames
/// that lie inside it. Empty when the interval holds no grid frame.
pub fn oracle_baseline(
    question_id: &str,
    interval: &EvidenceInterval,
    timeline: &FrameTimeline,
    k: usize,
) -> Result<SelectionResult> {
    interval.validate()?;
    let tau = compute_tau(timeline.duration_s, k)?;
    let inside = timeline.frames_in(interval);
    let picks = if inside.is_empty() {
        Vec::new()
    } else if k >= inside.len() {
        inside.map(|f| timeline.time_of(f)).collect()
    } else {
        let len = interval.length();
        snap_unique(
            timeline,
            (0..k).map(|i| interval.start_s + (i as f64 + 0.5) * len / k as f64),
            inside.start,
            inside.end - 1,
        )
    };
    Ok(SelectionResult::from_picks(question_id, k, tau, picks))
}

/// One scene-matcher call on the question with its options appended, ranked
/// and thinned with greedy NMS.
pub fn siglipq_baseline(
    item: &QueryItem,
    scorer: &dyn Scorer,
    timeline: &FrameTimeline,
    k: usize,
    tau: f64,
) -> Result<SelectionResult> {
    let query = item.concatenated_query();
    let scores = scorer.score(&item.video_id, ToolKind::SceneMatcher, &query, timeline)?;
    let ranks = scores_to_ranks(&ScoreVector::new("Q1", &item.video_id, scores))?;
    let as_f64: Vec<f64> = ranks.ranks.iter().map(|&r| f64::from(r)).collect();
    let mut ranking = finalize_ranking(&as_f64, MergeMode::Rank);
    ranking.video_id = item.video_id.clone();
    greedy_nms(&item.id, &ranking, timeline, k, tau)
}

/// No frames at all.
pub fn blind_baseline(question_id: &str, k: usize, tau: f64) -> SelectionResult {
    SelectionResult::from_picks(question_id, k, tau, Vec::new())
}
