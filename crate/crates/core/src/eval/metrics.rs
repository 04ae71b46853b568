//! Retrieval metrics over selections.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::select::{max_capacity, SelectionResult};
use crate::timeline::EvidenceInterval;

/// For each `K`: whether any of the first `K` picked frames (pick order, not
/// temporal order) lies in the interval.
pub fn hit_at_k(
    selection: &SelectionResult,
    interval: &EvidenceInterval,
    ks: &[usize],
) -> BTreeMap<usize, bool> {
    let first_hit = selection
        .pick_order
        .iter()
        .position(|&t| interval.contains(t));
    ks.iter()
        .map(|&k| (k, first_hit.is_some_and(|pos| pos < k)))
        .collect()
}

/// Distinct selected frames inside the interval over the interval's
/// τ-separated capacity, clamped to `[0, 1]`.
pub fn normalized_recall(
    selection: &SelectionResult,
    interval: &EvidenceInterval,
    tau: f64,
    k: usize,
) -> Result<f64> {
    let capacity = max_capacity(interval, tau, k)?;
    let inside: BTreeSet<u64> = selection
        .pick_order
        .iter()
        .filter(|&&t| interval.contains(t))
        .map(|t| t.to_bits())
        .collect();
    Ok((inside.len() as f64 / capacity as f64).min(1.0))
}
