//! Inputs shared by the benchmarks.

use std::collections::HashMap;

use keyframe_core::providers::synthetic::keyed_normals;
use keyframe_core::{FrameTimeline, ScoreVector};

/// `calls` noise score vectors over a video of `duration_s` at `fps`.
pub fn score_vectors(
    duration_s: f64,
    fps: f64,
    calls: usize,
) -> (FrameTimeline, HashMap<String, ScoreVector>) {
    let tl = FrameTimeline::build("bench", duration_s, fps).expect("valid timeline");
    let vectors = (1..=calls)
        .map(|i| {
            let id = format!("Q{i}");
            let scores = keyed_normals(7, &id, tl.len());
            (id.clone(), ScoreVector::new(&id, "bench", scores))
        })
        .collect();
    (tl, vectors)
}

/// Planner output with five calls and a nested combine expression.
pub const RAW_PLAN: &str = "Find the woman and the book, then each candidate action.\n```json\n{\"queries\": [{\"tool\": \"tren\", \"query\": \"woman in red dress\", \"id\": \"Q1\"}, {\"tool\": \"tren\", \"query\": \"book\", \"id\": \"Q2\"}, {\"tool\": \"siglip\", \"query\": \"person placing book on shelf\", \"id\": \"Q3\"}, {\"tool\": \"siglip\", \"query\": \"person handing book to someone\", \"id\": \"Q4\"}, {\"tool\": \"siglip\", \"query\": \"person sitting on couch reading\", \"id\": \"Q5\"}], \"combine\": \"(Q1 AND Q2) AND (Q3 OR Q4 OR Q5)\"}\n```\n";
