//! External capabilities behind traits: frame scorers, OCR sources, planner,
//! judge and answerer clients.
//!
//! Three backends are provided. `file` reads the on-disk contracts written by
//! the offline adapter (score files, OCR JSON Lines, plan caches); `synthetic`
//! generates planted-evidence scores from a seed; `remote` talks to an HTTP
//! scoring service and a chat-completion endpoint.

pub mod answer;
pub mod chat;
pub mod files;
pub mod planner;
pub mod remote;
pub mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ocr::OcrExtraction;
use crate::plan::ToolKind;
use crate::timeline::FrameTimeline;

pub use answer::{
    answer, extract_letter, Answer, Answerer, ChatAnswerer, OracleAnswerer, RandomAnswerer,
};
pub use chat::{ChatClient, ChatJudge, ChatMessage, HttpChatClient};
pub use files::{FileOcrSource, FileScorer, OcrRecord, ScoreFile};
pub use planner::{
    plan_query, CachedPlanner, PlanCache, PlanCacheEntry, PlanSource, StaticPlanner,
};
pub use remote::{HttpTransport, RemoteScorer, Transport};
pub use synthetic::{CallSignal, SynthDatasetSpec, SyntheticProvider, SyntheticSpec};

/// Environment variable naming the remote service base URL.
pub const ENV_ENDPOINT: &str = "RM_ENDPOINT";
/// Environment variable carrying the bearer token for the remote service.
pub const ENV_API_KEY: &str = "RM_API_KEY";
/// Environment variable naming the cache directory for plans and scores.
pub const ENV_CACHE_DIR: &str = "RM_CACHE_DIR";

/// Scores every frame of a timeline against a text query.
pub trait Scorer: Send + Sync {
    fn score(
        &self,
        video_id: &str,
        tool: ToolKind,
        query: &str,
        timeline: &FrameTimeline,
    ) -> Result<Vec<f64>>;
}

/// Supplies per-frame text extractions for a video.
pub trait OcrSource: Send + Sync {
    fn extractions(&self, video_id: &str, timeline: &FrameTimeline) -> Result<Vec<OcrExtraction>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    File,
    Synthetic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub backend: Backend,
    /// Data root for the file backend (also the OCR source for remote runs).
    pub root_path: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_concurrent_requests: usize,
    pub retry_count: u32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            backend: Backend::File,
            root_path: None,
            endpoint: None,
            timeout_ms: 30_000,
            max_concurrent_requests: 4,
            retry_count: 2,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::invalid("timeout_ms must be positive"));
        }
        if self.max_concurrent_requests == 0 {
            return Err(Error::invalid("max_concurrent_requests must be at least 1"));
        }
        match self.backend {
            Backend::File if self.root_path.is_none() => {
                Err(Error::invalid("file backend needs a root path"))
            }
            Backend::Remote if self.endpoint.is_none() => Err(Error::invalid(format!(
                "remote backend needs an endpoint (set {ENV_ENDPOINT})"
            ))),
            _ => Ok(()),
        }
    }
}
