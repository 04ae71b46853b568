//! Rank-based fusion of per-tool frame scores.
//!
//! Every tool call scores every frame. Scores become dense ranks (1 = best,
//! ties to the earlier frame), and the combine expression folds the rank
//! vectors frame by frame: `AND` keeps the worse (larger) rank, `OR` the
//! better (smaller) one.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::{BoolOp, CombineExpr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub call_id: String,
    pub video_id: String,
    /// One score per timeline frame, higher is a better match.
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(call_id: impl Into<String>, video_id: impl Into<String>, scores: Vec<f64>) -> Self {
        Self {
            call_id: call_id.into(),
            video_id: video_id.into(),
            scores,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector {
    pub call_id: String,
    /// A permutation of `1..=n`.
    pub ranks: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    /// Fuse dense per-tool ranks.
    #[default]
    Rank,
    /// Fuse raw tool scores without rank conversion.
    Raw,
}

/// The single fused ordering over a video's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedRanking {
    pub video_id: String,
    pub mode: MergeMode,
    /// Frame indices, best first.
    pub order: Vec<usize>,
    /// Per-frame fused value: a rank in rank mode, a score in raw mode.
    pub merged_value: Vec<f64>,
    /// Frames moved to the front by OCR injection.
    pub injected: BTreeSet<usize>,
}

impl MergedRanking {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Ranking in plain temporal order, used when a plan has no tool calls.
    pub fn temporal(video_id: impl Into<String>, n: usize) -> Self {
        let values: Vec<f64> = (1..=n).map(|r| r as f64).collect();
        let mut out = finalize_ranking(&values, MergeMode::Rank);
        out.video_id = video_id.into();
        out
    }
}

/// Converts scores to dense ranks: descending score, ties to the lower index.
pub fn scores_to_ranks(scores: &ScoreVector) -> Result<RankVector> {
    if let Some(i) = scores.scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite score {} at frame {i} of call {}",
            scores.scores[i], scores.call_id
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps lower indices first among equal scores.
    idx.sort_by(|&a, &b| scores.scores[b].total_cmp(&scores.scores[a]));
    let mut ranks = vec![0u32; scores.len()];
    for (pos, &frame) in idx.iter().enumerate() {
        ranks[frame] = pos as u32 + 1;
    }
    Ok(RankVector {
        call_id: scores.call_id.clone(),
        ranks,
    })
}

fn fold<'a, T: Copy + 'a>(
    expr: &CombineExpr,
    lookup: &dyn Fn(&str) -> Option<&'a [T]>,
    n: usize,
    and: fn(T, T) -> T,
    or: fn(T, T) -> T,
) -> Result<Vec<T>> {
    match expr {
        CombineExpr::Leaf(id) => {
            let v = lookup(id)
                .ok_or_else(|| Error::Contract(format!("no vector for tool call {id}")))?;
            if v.len() != n {
                return Err(Error::Contract(format!(
                    "vector for {id} has {} frames, expected {n}",
                    v.len()
                )));
            }
            Ok(v.to_vec())
        }
        CombineExpr::Node { op, left, right } => {
            let mut l = fold(left, lookup, n, and, or)?;
            let r = fold(right, lookup, n, and, or)?;
            let f = match op {
                BoolOp::And => and,
                BoolOp::Or => or,
            };
            for (a, b) in l.iter_mut().zip(r) {
                *a = f(*a, b);
            }
            Ok(l)
        }
    }
}

fn common_len<'a>(mut lens: impl Iterator<Item = (&'a str, usize)>) -> Result<usize> {
    let Some((_, n)) = lens.next() else {
        return Err(Error::Contract("no vectors supplied".into()));
    };
    for (id, len) in lens {
        if len != n {
            return Err(Error::Contract(format!(
                "vector for {id} has {len} frames, expected {n}"
            )));
        }
    }
    Ok(n)
}

/// Evaluates `expr` over rank vectors: AND is the elementwise max, OR the min.
pub fn eval_combine(expr: &CombineExpr, ranks: &HashMap<String, RankVector>) -> Result<Vec<u32>> {
    let n = common_len(ranks.iter().map(|(k, v)| (k.as_str(), v.ranks.len())))?;
    fold(
        expr,
        &|id| ranks.get(id).map(|r| r.ranks.as_slice()),
        n,
        u32::max,
        u32::min,
    )
}

/// Score-domain variant: AND is the elementwise min, OR the max.
pub fn eval_combine_raw(
    expr: &CombineExpr,
    scores: &HashMap<String, ScoreVector>,
) -> Result<Vec<f64>> {
    let n = common_len(scores.iter().map(|(k, v)| (k.as_str(), v.scores.len())))?;
    fold(
        expr,
        &|id| scores.get(id).map(|s| s.scores.as_slice()),
        n,
        f64::min,
        f64::max,
    )
}

/// Orders frames by fused value (ascending in rank mode, descending in raw
/// mode), breaking ties by the earlier frame.
pub fn finalize_ranking(merged: &[f64], mode: MergeMode) -> MergedRanking {
    let mut order: Vec<usize> = (0..merged.len()).collect();
    order.sort_by(|&a, &b| {
        let by_value = match mode {
            MergeMode::Rank => merged[a].total_cmp(&merged[b]),
            MergeMode::Raw => merged[b].total_cmp(&merged[a]),
        };
        by_value.then(a.cmp(&b))
    });
    MergedRanking {
        video_id: String::new(),
        mode,
        order,
        merged_value: merged.to_vec(),
        injected: BTreeSet::new(),
    }
}

/// Runs the full fusion for one video: rank conversion (rank mode), expression
/// evaluation and final ordering.
pub fn fuse(
    expr: &CombineExpr,
    scores: &HashMap<String, ScoreVector>,
    mode: MergeMode,
) -> Result<MergedRanking> {
    let values = match mode {
        MergeMode::Rank => {
            let ranks = scores
                .iter()
                .map(|(id, s)| Ok((id.clone(), scores_to_ranks(s)?)))
                .collect::<Result<HashMap<_, _>>>()?;
            eval_combine(expr, &ranks)?
                .into_iter()
                .map(f64::from)
                .collect::<Vec<_>>()
        }
        MergeMode::Raw => {
            for s in scores.values() {
                if s.scores.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!(
                        "non-finite score in call {}",
                        s.call_id
                    )));
                }
            }
            eval_combine_raw(expr, scores)?
        }
    };
    let mut ranking = finalize_ranking(&values, mode);
    if let Some(v) = scores.values().next() {
        ranking.video_id = v.video_id.clone();
    }
    Ok(ranking)
}
