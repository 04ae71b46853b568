//! Query-conditioned keyframe retrieval for long videos.
//!
//! A planner turns a query into a few tool calls joined by an AND/OR
//! expression. Each call scores every sampled frame; scores become dense
//! ranks, the expression folds them into one ranking (AND keeps the worse
//! rank, OR the better), OCR hits are pushed to the front, and greedy
//! temporal NMS picks at most `k` frames at least `tau` seconds apart.

pub mod error;
pub mod eval;
pub mod merge;
pub mod ocr;
pub mod plan;
pub mod providers;
pub mod select;
pub mod timeline;

pub use error::{Error, Result};
pub use merge::{
    eval_combine, eval_combine_raw, finalize_ranking, fuse, scores_to_ranks, MergeMode,
    MergedRanking, RankVector, ScoreVector,
};
pub use ocr::{OcrConfig, OcrEvidence, OcrExtraction, OcrGroup};
pub use plan::{parse_plan, BoolOp, CombineExpr, Plan, ToolCall, ToolKind};
pub use select::{greedy_nms, max_capacity, SelectionResult};
pub use timeline::{compute_tau, EvidenceInterval, FrameTimeline, TIME_EPS};
