//! End-to-end retrieval for one query: plan, score, merge, OCR, select.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::baselines::uniform_baseline;
use crate::eval::QueryItem;
use crate::merge::{fuse, MergeMode, MergedRanking, ScoreVector};
use crate::ocr::{collect_evidence, inject_ocr, Judge, OcrConfig};
use crate::plan::{parse_plan, Plan, ToolKind};
use crate::providers::{OcrSource, PlanSource, Scorer};
use crate::select::{greedy_nms, SelectionResult};
use crate::timeline::{compute_tau, FrameTimeline};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub fps: f64,
    pub mode: MergeMode,
    pub ocr: bool,
    pub ocr_cfg: OcrConfig,
    /// Replace every plan with the one-leaf concatenated-question plan.
    pub single_call: bool,
    /// Drop region-matcher calls from parsed plans.
    pub no_region: bool,
    pub tau_override: Option<f64>,
    /// Top up short selections with uniform frames.
    pub pad: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 8,
            fps: 2.0,
            mode: MergeMode::Rank,
            ocr: true,
            ocr_cfg: OcrConfig::default(),
            single_call: false,
            no_region: false,
            tau_override: None,
            pad: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::invalid("fps must be positive"));
        }
        if let Some(t) = self.tau_override {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid("tau override must be positive"));
            }
        }
        Ok(())
    }

    pub fn tau_for(&self, duration_s: f64) -> Result<f64> {
        match self.tau_override {
            Some(t) => Ok(t),
            None => compute_tau(duration_s, self.k),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Setup,
    Plan,
    Score,
    Merge,
    Ocr,
    Select,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Setup => "setup",
            Stage::Plan => "plan",
            Stage::Score => "score",
            Stage::Merge => "merge",
            Stage::Ocr => "ocr",
            Stage::Select => "select",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {error}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub error: Error,
}

fn at<T>(stage: Stage, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage, error })
}

/// Providers one run draws on.
#[derive(Clone)]
pub struct Engine {
    pub scorer: Arc<dyn Scorer>,
    pub planner: Arc<dyn PlanSource>,
    pub ocr: Option<Arc<dyn OcrSource>>,
    pub judge: Arc<dyn Judge>,
}

/// Everything produced for one query besides the selection itself.
#[derive(Debug, Clone)]
pub struct QuestionOutcome {
    pub selection: SelectionResult,
    pub plan: Plan,
    /// Why the fallback plan was used, if it was.
    pub fallback: Option<String>,
    pub ocr_frames: usize,
    pub judge_failures: usize,
}

/// Picks the plan to execute: the parsed planner output, or the one-leaf
/// fallback when the planner fails, the output does not parse, or the
/// ablation flags leave nothing.
pub fn resolve_plan(
    item: &QueryItem,
    raw: Result<String>,
    cfg: &PipelineConfig,
) -> (Plan, Option<String>) {
    if cfg.single_call {
        return (item.fallback_plan(), None);
    }
    let parsed = match raw.and_then(|r| parse_plan(&r)) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("{}: planner output unusable, falling back: {e}", item.id);
            return (item.fallback_plan(), Some(e.to_string()));
        }
    };
    if cfg.no_region {
        return match parsed.without_tool(ToolKind::RegionMatcher) {
            Some(p) => (p, None),
            None => (
                item.fallback_plan(),
                Some("no calls left after dropping region matcher".into()),
            ),
        };
    }
    (parsed, None)
}

/// Scores every declared call and fuses them into one ranking. Plans with no
/// calls produce a temporal ranking for OCR injection to reorder.
pub fn rank_with_plan(
    item: &QueryItem,
    plan: &Plan,
    timeline: &FrameTimeline,
    scorer: &dyn Scorer,
    mode: MergeMode,
) -> std::result::Result<MergedRanking, StageError> {
    let mut scores = HashMap::new();
    for call in &plan.calls {
        let s = at(
            Stage::Score,
            scorer.score(&item.video_id, call.tool, &call.query, timeline),
        )?;
        if s.len() != timeline.len() {
            return Err(StageError {
                stage: Stage::Score,
                error: Error::Contract(format!(
                    "{} returned {} scores for {} frames",
                    call.id,
                    s.len(),
                    timeline.len()
                )),
            });
        }
        scores.insert(
            call.id.clone(),
            ScoreVector::new(&call.id, &item.video_id, s),
        );
    }
    match &plan.combine {
        Some(expr) => {
            let mut r = at(Stage::Merge, fuse(expr, &scores, mode))?;
            r.video_id = item.video_id.clone();
            Ok(r)
        }
        None => Ok(MergedRanking::temporal(&item.video_id, timeline.len())),
    }
}

/// Full pipeline for one query.
pub fn run_question(
    item: &QueryItem,
    engine: &Engine,
    cfg: &PipelineConfig,
) -> std::result::Result<QuestionOutcome, StageError> {
    at(Stage::Setup, cfg.validate())?;
    let timeline = at(
        Stage::Setup,
        FrameTimeline::build(&item.video_id, item.duration_s, cfg.fps),
    )?;
    let tau = at(Stage::Setup, cfg.tau_for(item.duration_s))?;

    let raw = if cfg.single_call {
        Ok(String::new())
    } else {
        engine.planner.raw_plan(item, cfg.fps)
    };
    let (plan, fallback) = resolve_plan(item, raw, cfg);

    let mut ranking = rank_with_plan(item, &plan, &timeline, engine.scorer.as_ref(), cfg.mode)?;

    let mut ocr_frames = 0;
    let mut judge_failures = 0;
    if cfg.ocr {
        if let Some(src) = &engine.ocr {
            let extractions = at(Stage::Ocr, src.extractions(&item.video_id, &timeline))?;
            let stage = at(
                Stage::Ocr,
                collect_evidence(
                    &extractions,
                    &item.concatenated_query(),
                    engine.judge.as_ref(),
                    &timeline,
                    tau,
                    &cfg.ocr_cfg,
                ),
            )?;
            judge_failures = stage.judge_failures.len();
            if !stage.evidence.is_empty() {
                ranking = at(Stage::Ocr, inject_ocr(&ranking, &stage.evidence))?;
                ocr_frames = ranking.injected.len();
            }
        }
    }

    let mut selection = at(
        Stage::Select,
        greedy_nms(&item.id, &ranking, &timeline, cfg.k, tau),
    )?;
    if cfg.pad && selection.len() < cfg.k {
        let extra = at(Stage::Select, uniform_baseline(&item.id, &timeline, cfg.k))?;
        let mut picks = selection.pick_order.clone();
        for t in extra.pick_order {
            if picks.len() == cfg.k {
                break;
            }
            if !picks.contains(&t) {
                picks.push(t);
            }
        }
        selection = SelectionResult::from_picks(&item.id, cfg.k, tau, picks);
    }
    Ok(QuestionOutcome {
        selection,
        plan,
        fallback,
        ocr_frames,
        judge_failures,
    })
}
