//! Planner prompting and the plan cache.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::chat::{ChatClient, ChatMessage};
use super::files::write_atomic;
use crate::error::{Error, Result};
use crate::eval::QueryItem;

/// Planner prompt with `{question}`, `{options}`, `{duration}` and `{fps}`
/// placeholders.
pub const PLANNER_PROMPT: &str = include_str!("../../data/planner_prompt.txt");

/// Produces raw planner output for one query.
pub trait PlanSource: Send + Sync {
    fn raw_plan(&self, item: &QueryItem, fps: f64) -> Result<String>;
}

/// Fills the planner prompt for `item`. Captions get `N/A` for options.
pub fn planner_prompt(item: &QueryItem, fps: f64) -> String {
    let options = if item.options.is_empty() {
        "N/A".to_string()
    } else {
        item.options
            .iter()
            .zip('A'..='E')
            .map(|(o, l)| format!("{l}) {o}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    PLANNER_PROMPT
        .replace("{question}", &item.text)
        .replace("{options}", &options)
        .replace("{duration}", &item.duration_s.to_string())
        .replace("{fps}", &fps.to_string())
}

/// Asks the planner client for a plan.
pub fn plan_query(item: &QueryItem, fps: f64, client: &dyn ChatClient) -> Result<String> {
    client
        .complete(&[ChatMessage::user(planner_prompt(item, fps))])
        .map_err(|e| Error::Provider(format!("planner: {e}")))
}

/// One line of a plan cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCacheEntry {
    pub question_id: String,
    pub raw: String,
    pub plan: serde_json::Value,
    /// Set when `raw` did not parse and `plan` is the single-query fallback.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

/// Write-once-read-many store of planner output keyed by question id.
#[derive(Debug, Default)]
pub struct PlanCache {
    entries: Mutex<BTreeMap<String, PlanCacheEntry>>,
}

impl PlanCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads a JSON Lines cache; a missing file yields an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        let cache = Self::new();
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(Error::io(path, e)),
        };
        {
            let mut map = cache.entries.lock().expect("plan cache poisoned");
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let entry: PlanCacheEntry = serde_json::from_str(line)
                    .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
                map.insert(entry.question_id.clone(), entry);
            }
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.entries.lock().expect("plan cache poisoned");
        let mut body = String::new();
        for entry in map.values() {
            body.push_str(&serde_json::to_string(entry)?);
            body.push('\n');
        }
        write_atomic(path, body.as_bytes())
    }

    pub fn get(&self, question_id: &str) -> Option<PlanCacheEntry> {
        self.entries
            .lock()
            .expect("plan cache poisoned")
            .get(question_id)
            .cloned()
    }

    /// Inserts unless an entry already exists; returns whether it was new.
    pub fn insert(&self, entry: PlanCacheEntry) -> bool {
        let mut map = self.entries.lock().expect("plan cache poisoned");
        if map.contains_key(&entry.question_id) {
            return false;
        }
        map.insert(entry.question_id.clone(), entry);
        true
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("plan cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PlanSource for PlanCache {
    fn raw_plan(&self, item: &QueryItem, _fps: f64) -> Result<String> {
        self.get(&item.id)
            .map(|e| e.raw)
            .ok_or_else(|| Error::MissingData {
                path: "plan cache".into(),
                message: format!("no cached plan for {}", item.id),
            })
    }
}

/// Planner client in front of a cache: each question is planned at most once.
pub struct CachedPlanner {
    client: Arc<dyn ChatClient>,
    cache: Arc<PlanCache>,
}

impl CachedPlanner {
    pub fn new(client: Arc<dyn ChatClient>, cache: Arc<PlanCache>) -> Self {
        Self { client, cache }
    }

    pub fn cache(&self) -> &Arc<PlanCache> {
        &self.cache
    }
}

impl PlanSource for CachedPlanner {
    fn raw_plan(&self, item: &QueryItem, fps: f64) -> Result<String> {
        if let Some(hit) = self.cache.get(&item.id) {
            return Ok(hit.raw);
        }
        let raw = plan_query(item, fps, self.client.as_ref())?;
        let (plan, fallback) = match crate::plan::parse_plan(&raw) {
            Ok(p) => (crate::plan::plan_to_value(&p), false),
            Err(_) => (crate::plan::plan_to_value(&item.fallback_plan()), true),
        };
        self.cache.insert(PlanCacheEntry {
            question_id: item.id.clone(),
            raw: raw.clone(),
            plan,
            fallback,
        });
        Ok(raw)
    }
}

/// Returns the same raw text for every query.
pub struct StaticPlanner(pub String);

impl PlanSource for StaticPlanner {
    fn raw_plan(&self, _item: &QueryItem, _fps: f64) -> Result<String> {
        Ok(self.0.clone())
    }
}
