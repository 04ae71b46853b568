//! On-screen text evidence: near-duplicate removal, relevance judging,
//! temporal grouping and injection at the head of the merged ranking.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::merge::MergedRanking;
use crate::timeline::{FrameTimeline, TIME_EPS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrExtraction {
    pub frame_index: usize,
    pub text: String,
    pub confidence: f64,
}

/// Knobs for the OCR stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcrConfig {
    /// Extractions at least this similar to a recent one are dropped.
    pub similarity_threshold: f64,
    /// How far back, in seconds, the duplicate check looks.
    pub window_s: f64,
    /// Extractions below this confidence are ignored.
    pub min_confidence: f64,
}

impl Default for OcrConfig {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.90,
            window_s: 1.0,
            min_confidence: 0.0,
        }
    }
}

impl OcrConfig {
    pub fn window_frames(&self, fps: f64) -> usize {
        ((self.window_s * fps).round() as usize).max(1)
    }
}

/// One temporal group of judged-relevant frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrGroup {
    pub frames: Vec<usize>,
    pub texts: Vec<String>,
    pub median_frame: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OcrEvidence {
    /// Median timestamp of each group, strictly increasing.
    pub kept_timestamps: Vec<f64>,
    pub groups: Vec<OcrGroup>,
}

impl OcrEvidence {
    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn frames(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.median_frame).collect()
    }
}

fn normalize_text(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// `1 - levenshtein / max_len` over normalized text.
pub fn text_similarity(a: &str, b: &str) -> f64 {
    strsim::normalized_levenshtein(&normalize_text(a), &normalize_text(b))
}

/// Drops an extraction when it is at least `threshold` similar to any
/// extraction from the previous `window_frames` frames (same frame included).
/// Chains of repeated text therefore collapse onto their first occurrence.
pub fn dedup_ocr(
    extractions: &[OcrExtraction],
    threshold: f64,
    window_frames: usize,
) -> Vec<OcrExtraction> {
    let mut kept = Vec::new();
    for (i, e) in extractions.iter().enumerate() {
        let lo = e.frame_index.saturating_sub(window_frames);
        let duplicate = extractions[..i]
            .iter()
            .rev()
            .take_while(|p| p.frame_index >= lo)
            .any(|p| text_similarity(&p.text, &e.text) >= threshold);
        if !duplicate {
            kept.push(e.clone());
        }
    }
    kept
}

/// Decides which texts are relevant to a query. Implementations receive the
/// whole batch for one question and answer one boolean per text.
pub trait Judge: Send + Sync {
    fn judge(&self, query: &str, texts: &[String]) -> Result<Vec<bool>>;
}

/// Accepts everything.
pub struct AcceptAll;

impl Judge for AcceptAll {
    fn judge(&self, _query: &str, texts: &[String]) -> Result<Vec<bool>> {
        Ok(vec![true; texts.len()])
    }
}

/// Rejects everything.
pub struct RejectAll;

impl Judge for RejectAll {
    fn judge(&self, _query: &str, texts: &[String]) -> Result<Vec<bool>> {
        Ok(vec![false; texts.len()])
    }
}

/// Marks a text relevant iff it shares a word of three or more characters
/// with the query (case-insensitive).
pub struct KeywordJudge;

fn words(s: &str) -> HashSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() >= 3)
        .map(str::to_lowercase)
        .collect()
}

impl Judge for KeywordJudge {
    fn judge(&self, query: &str, texts: &[String]) -> Result<Vec<bool>> {
        let q = words(query);
        Ok(texts
            .iter()
            .map(|t| words(t).iter().any(|w| q.contains(w)))
            .collect())
    }
}

#[derive(Debug, Default)]
pub struct JudgeOutcome {
    pub kept: Vec<OcrExtraction>,
    /// Judge errors, one entry per affected extraction (frame index, message).
    pub failures: Vec<(usize, String)>,
}

/// Keeps the extractions the judge marks relevant. A failed judge call drops
/// every extraction in the batch and records why.
pub fn judge_relevance(
    extractions: &[OcrExtraction],
    query: &str,
    judge: &dyn Judge,
) -> JudgeOutcome {
    if extractions.is_empty() {
        return JudgeOutcome::default();
    }
    let texts: Vec<String> = extractions.iter().map(|e| e.text.clone()).collect();
    let verdicts = judge.judge(query, &texts).and_then(|v| {
        if v.len() == texts.len() {
            Ok(v)
        } else {
            Err(Error::Provider(format!(
                "judge returned {} verdicts for {} texts",
                v.len(),
                texts.len()
            )))
        }
    });
    match verdicts {
        Ok(v) => JudgeOutcome {
            kept: extractions
                .iter()
                .zip(v)
                .filter(|(_, ok)| *ok)
                .map(|(e, _)| e.clone())
                .collect(),
            failures: Vec::new(),
        },
        Err(err) => {
            log::warn!(
                "OCR judge failed, dropping {} extractions: {err}",
                extractions.len()
            );
            JudgeOutcome {
                kept: Vec::new(),
                failures: extractions
                    .iter()
                    .map(|e| (e.frame_index, err.to_string()))
                    .collect(),
            }
        }
    }
}

/// Groups frames in one pass: a new group starts when the gap to the previous
/// frame exceeds `tau`. Each group keeps its median frame; for an even count
/// the earlier middle frame.
pub fn group_ocr_frames(
    kept: &[OcrExtraction],
    timeline: &FrameTimeline,
    tau: f64,
) -> Result<OcrEvidence> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if let Some(e) = kept.iter().find(|e| e.frame_index >= timeline.len()) {
        return Err(Error::invalid(format!(
            "OCR frame index {} outside timeline of {} frames",
            e.frame_index,
            timeline.len()
        )));
    }
    let mut sorted: Vec<&OcrExtraction> = kept.iter().collect();
    sorted.sort_by_key(|e| e.frame_index);

    let mut groups: Vec<OcrGroup> = Vec::new();
    let mut prev_t = f64::NEG_INFINITY;
    for e in sorted {
        let t = timeline.time_of(e.frame_index);
        let start_new = groups.is_empty() || t - prev_t > tau + TIME_EPS;
        if start_new {
            groups.push(OcrGroup {
                frames: Vec::new(),
                texts: Vec::new(),
                median_frame: 0,
            });
        }
        let g = groups.last_mut().expect("group exists");
        if g.frames.last() != Some(&e.frame_index) {
            g.frames.push(e.frame_index);
        }
        g.texts.push(e.text.clone());
        prev_t = t;
    }
    for g in &mut groups {
        g.median_frame = g.frames[(g.frames.len() - 1) / 2];
    }
    Ok(OcrEvidence {
        kept_timestamps: groups
            .iter()
            .map(|g| timeline.time_of(g.median_frame))
            .collect(),
        groups,
    })
}

/// Moves the evidence frames to the front of the ranking, in temporal order,
/// leaving the relative order of every other frame untouched.
pub fn inject_ocr(ranking: &MergedRanking, evidence: &OcrEvidence) -> Result<MergedRanking> {
    let mut front: Vec<usize> = evidence.frames();
    front.sort_unstable();
    front.dedup();
    if let Some(&bad) = front.iter().find(|&&f| f >= ranking.len()) {
        return Err(Error::invalid(format!(
            "OCR frame {bad} outside ranking of {} frames",
            ranking.len()
        )));
    }
    let injected: BTreeSet<usize> = front.iter().copied().collect();
    let mut order = front;
    order.extend(
        ranking
            .order
            .iter()
            .copied()
            .filter(|f| !injected.contains(f)),
    );
    let mut all = ranking.injected.clone();
    all.extend(injected);
    Ok(MergedRanking {
        video_id: ranking.video_id.clone(),
        mode: ranking.mode,
        order,
        merged_value: ranking.merged_value.clone(),
        injected: all,
    })
}

/// Drops low-confidence extractions and sorts by frame.
pub fn prepare(extractions: &[OcrExtraction], min_confidence: f64) -> Vec<OcrExtraction> {
    let mut out: Vec<OcrExtraction> = extractions
        .iter()
        .filter(|e| e.confidence >= min_confidence && !e.text.trim().is_empty())
        .cloned()
        .collect();
    out.sort_by_key(|e| e.frame_index);
    out
}

/// Outcome of the whole OCR stage for one query.
#[derive(Debug, Default)]
pub struct OcrStage {
    pub evidence: OcrEvidence,
    pub judge_failures: Vec<(usize, String)>,
}

/// Runs dedup, judging and grouping for one query.
pub fn collect_evidence(
    extractions: &[OcrExtraction],
    query: &str,
    judge: &dyn Judge,
    timeline: &FrameTimeline,
    tau: f64,
    cfg: &OcrConfig,
) -> Result<OcrStage> {
    let prepared = prepare(extractions, cfg.min_confidence);
    let unique = dedup_ocr(
        &prepared,
        cfg.similarity_threshold,
        cfg.window_frames(timeline.fps),
    );
    let judged = judge_relevance(&unique, query, judge);
    Ok(OcrStage {
        evidence: group_ocr_frames(&judged.kept, timeline, tau)?,
        judge_failures: judged.failures,
    })
}
