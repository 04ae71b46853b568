//! Dataset-level aggregation and report rendering.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::{hit_at_k, normalized_recall};
use crate::eval::QueryItem;
use crate::providers::answer::{answer, Answer, Answerer};
use crate::select::SelectionResult;

/// The K columns of the standard report table.
pub const REPORT_KS: [usize; 6] = [1, 2, 4, 8, 16, 32];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub workers: usize,
    /// Drop failed records from denominators instead of scoring them as
    /// misses.
    pub exclude_failures: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: REPORT_KS.to_vec(),
            workers: 1,
            exclude_failures: false,
        }
    }
}

/// What a method returns for one record.
#[derive(Debug, Clone)]
pub struct MethodOutput {
    pub selection: SelectionResult,
    pub fallback: bool,
}

impl From<SelectionResult> for MethodOutput {
    fn from(selection: SelectionResult) -> Self {
        Self {
            selection,
            fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordResult {
    pub id: String,
    pub selection: Option<SelectionResult>,
    pub error: Option<String>,
    pub fallback: bool,
    pub hits: BTreeMap<usize, bool>,
    pub normalized_recall: Option<f64>,
    pub answers: BTreeMap<String, Answer>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub records: usize,
    pub failed: usize,
    pub fallbacks: usize,
    /// Records carrying a gold answer.
    pub answerable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    /// Percentages, keyed by K.
    pub hit_at_k: BTreeMap<usize, f64>,
    /// Percentages, keyed by `answerer@K`.
    pub qa_accuracy: BTreeMap<String, f64>,
    pub mean_normalized_recall: Option<f64>,
    pub counts: Counts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub config: BTreeMap<String, serde_json::Value>,
    pub methods: BTreeMap<String, MethodReport>,
}

impl RetrievalReport {
    /// Canonical JSON body: sorted keys, no timing fields.
    pub fn to_canonical_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        return 0.0;
    }
    (1000.0 * num as f64 / den as f64).round() / 10.0
}

fn score_record(
    item: &QueryItem,
    out: std::result::Result<MethodOutput, String>,
    ks: &[usize],
    answerers: &[&dyn Answerer],
) -> RecordResult {
    match out {
        Ok(MethodOutput {
            selection,
            fallback,
        }) => {
            let hits = hit_at_k(&selection, &item.interval, ks);
            let normalized_recall =
                normalized_recall(&selection, &item.interval, selection.tau, selection.k).ok();
            let answers = match item.answer {
                Some(_) => answerers
                    .iter()
                    .map(|a| {
                        (
                            a.name().to_string(),
                            answer(item, &selection.timestamps, *a),
                        )
                    })
                    .collect(),
                None => BTreeMap::new(),
            };
            RecordResult {
                id: item.id.clone(),
                selection: Some(selection),
                error: None,
                fallback,
                hits,
                normalized_recall,
                answers,
            }
        }
        Err(e) => RecordResult {
            id: item.id.clone(),
            selection: None,
            error: Some(e),
            fallback: false,
            hits: ks.iter().map(|&k| (k, false)).collect(),
            normalized_recall: None,
            answers: BTreeMap::new(),
        },
    }
}

/// Runs `method` on every item with up to `cfg.workers` threads and
/// aggregates the results. Per-record output order follows `items`.
pub fn evaluate_dataset<F>(
    items: &[QueryItem],
    method: F,
    answerers: &[&dyn Answerer],
    cfg: &EvalConfig,
) -> Result<(MethodReport, Vec<RecordResult>)>
where
    F: Fn(&QueryItem) -> std::result::Result<MethodOutput, String> + Sync,
{
    if items.is_empty() {
        return Err(Error::invalid("dataset has no records"));
    }
    if cfg.ks.is_empty() || cfg.ks.contains(&0) {
        return Err(Error::invalid("K values must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let results: Vec<RecordResult> = pool.install(|| {
        items
            .par_iter()
            .map(|item| score_record(item, method(item), &cfg.ks, answerers))
            .collect()
    });
    if results.iter().all(|r| r.error.is_some()) {
        return Err(Error::Provider(format!(
            "all {} records failed; first error: {}",
            results.len(),
            results[0].error.as_deref().unwrap_or_default()
        )));
    }
    Ok((aggregate(items, &results, answerers, cfg), results))
}

fn aggregate(
    items: &[QueryItem],
    results: &[RecordResult],
    answerers: &[&dyn Answerer],
    cfg: &EvalConfig,
) -> MethodReport {
    let counted: Vec<(&QueryItem, &RecordResult)> = items
        .iter()
        .zip(results)
        .filter(|(_, r)| !(cfg.exclude_failures && r.error.is_some()))
        .collect();
    let den = counted.len();
    let hit_at_k = cfg
        .ks
        .iter()
        .map(|&k| {
            let n = counted.iter().filter(|(_, r)| r.hits[&k]).count();
            (k, percent(n, den))
        })
        .collect();

    let answerable: Vec<&(&QueryItem, &RecordResult)> =
        counted.iter().filter(|(i, _)| i.answer.is_some()).collect();
    let budget = results
        .iter()
        .find_map(|r| r.selection.as_ref().map(|s| s.k))
        .unwrap_or_default();
    let mut qa_accuracy = BTreeMap::new();
    if !answerable.is_empty() {
        for a in answerers {
            let correct = answerable
                .iter()
                .filter(|(i, r)| {
                    let gold = i.answer.unwrap_or_default();
                    r.answers
                        .get(a.name())
                        .is_some_and(|ans| ans.is_correct(gold))
                })
                .count();
            qa_accuracy.insert(
                format!("{}@{budget}", a.name()),
                percent(correct, answerable.len()),
            );
        }
    }

    let recalls: Vec<f64> = counted
        .iter()
        .map(|(_, r)| r.normalized_recall.unwrap_or(0.0))
        .collect();
    let mean_normalized_recall = (!recalls.is_empty())
        .then(|| (recalls.iter().sum::<f64>() / recalls.len() as f64 * 1e4).round() / 1e4);

    MethodReport {
        hit_at_k,
        qa_accuracy,
        mean_normalized_recall,
        counts: Counts {
            records: results.len(),
            failed: results.iter().filter(|r| r.error.is_some()).count(),
            fallbacks: results.iter().filter(|r| r.fallback).count(),
            answerable: items.iter().filter(|i| i.answer.is_some()).count(),
        },
    }
}

/// Scores existing selections against a dataset. Every item needs a
/// selection and every selection an item.
pub fn rescore(
    selections: &[SelectionResult],
    items: &[QueryItem],
    cfg: &EvalConfig,
) -> Result<MethodReport> {
    let by_id: HashMap<&str, &SelectionResult> = selections
        .iter()
        .map(|s| (s.question_id.as_str(), s))
        .collect();
    let item_ids: std::collections::HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
    let mut missing: Vec<&str> = items
        .iter()
        .map(|i| i.id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let mut unknown: Vec<&str> = by_id
        .keys()
        .copied()
        .filter(|id| !item_ids.contains(id))
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        missing.sort_unstable();
        unknown.sort_unstable();
        return Err(Error::Validation(format!(
            "selection ids do not match dataset ids; no selection for [{}]; no record for [{}]",
            missing.join(", "),
            unknown.join(", ")
        )));
    }
    let (report, _) = evaluate_dataset(
        items,
        |item| Ok(by_id[item.id.as_str()].clone().into()),
        &[],
        cfg,
    )?;
    Ok(report)
}

/// Plain-text table with one row per method and one column per K.
pub fn render_table(report: &RetrievalReport) -> String {
    let ks: Vec<usize> = {
        let mut ks: Vec<usize> = report
            .methods
            .values()
            .flat_map(|m| m.hit_at_k.keys().copied())
            .collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    };
    let qa: Vec<String> = {
        let mut q: Vec<String> = report
            .methods
            .values()
            .flat_map(|m| m.qa_accuracy.keys().cloned())
            .collect();
        q.sort();
        q.dedup();
        q
    };
    let width = report
        .methods
        .keys()
        .map(String::len)
        .max()
        .unwrap_or(6)
        .max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<width$} {:>6}", "method", "n");
    for k in &ks {
        let _ = write!(out, " {:>7}", format!("HIT@{k}"));
    }
    for q in &qa {
        let _ = write!(out, " {:>w$}", format!("QA {q}"), w = q.len() + 3);
    }
    out.push('\n');
    for (name, m) in &report.methods {
        let _ = write!(out, "{name:<width$} {:>6}", m.counts.records);
        for k in &ks {
            match m.hit_at_k.get(k) {
                Some(v) => {
                    let _ = write!(out, " {v:>7.1}");
                }
                None => {
                    let _ = write!(out, " {:>7}", "-");
                }
            }
        }
        for q in &qa {
            let w = q.len() + 3;
            match m.qa_accuracy.get(q) {
                Some(v) => {
                    let _ = write!(out, " {v:>w$.1}");
                }
                None => {
                    let _ = write!(out, " {:>w$}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::EvidenceInterval;

    fn item(id: &str) -> QueryItem {
        QueryItem {
            id: id.into(),
            video_id: "v".into(),
            duration_s: 600.0,
            text: "q".into(),
            options: vec![],
            answer: None,
            interval: EvidenceInterval::new(100.0, 115.0).unwrap(),
        }
    }

    #[test]
    fn three_of_four() {
        let items: Vec<QueryItem> = (0..4).map(|i| item(&format!("q{i}"))).collect();
        let (r, per) = evaluate_dataset(
            &items,
            |it| {
                let t = if it.id == "q3" { 300.0 } else { 105.0 };
                Ok(SelectionResult::from_picks(&it.id, 8, 10.0, vec![0.0, t]).into())
            },
            &[],
            &EvalConfig::default(),
        )
        .unwrap();
        assert_eq!(r.hit_at_k[&8], 75.0);
        assert_eq!(r.hit_at_k[&1], 0.0);
        assert_eq!(per.len(), 4);
    }

    #[test]
    fn failures() {
        let items: Vec<QueryItem> = (0..4).map(|i| item(&format!("q{i}"))).collect();
        let run = |it: &QueryItem| {
            if it.id == "q0" {
                Err("boom".to_string())
            } else {
                Ok(SelectionResult::from_picks(&it.id, 8, 10.0, vec![105.0]).into())
            }
        };
        let (r, _) = evaluate_dataset(&items, run, &[], &EvalConfig::default()).unwrap();
        assert_eq!(r.hit_at_k[&1], 75.0);
        assert_eq!(r.counts.failed, 1);
        let cfg = EvalConfig {
            exclude_failures: true,
            ..EvalConfig::default()
        };
        let (r, _) = evaluate_dataset(&items, run, &[], &cfg).unwrap();
        assert_eq!(r.hit_at_k[&1], 100.0);
        assert!(evaluate_dataset(&items, |_| Err("x".to_string()), &[], &cfg).is_err());
    }

    #[test]
    fn rescore_id_mismatch() {
        let items = vec![item("a"), item("b")];
        let sels = vec![SelectionResult::from_picks("a", 8, 10.0, vec![105.0])];
        let err = rescore(&sels, &items, &EvalConfig::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains('b'), "{err}");
    }

    #[test]
    fn table_has_k_columns() {
        let mut report = RetrievalReport::default();
        let items = vec![item("a")];
        let sels = vec![SelectionResult::from_picks("a", 8, 10.0, vec![105.0])];
        report.methods.insert(
            "oracle".into(),
            rescore(&sels, &items, &EvalConfig::default()).unwrap(),
        );
        let table = render_table(&report);
        let header = table.lines().next().unwrap();
        assert_eq!(header.matches("HIT@").count(), 6);
        assert!(table.lines().nth(1).unwrap().contains("100.0"));
    }
}
