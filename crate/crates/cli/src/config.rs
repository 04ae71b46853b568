//! Run configuration shared by the commands.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use keyframe_core::eval::{PipelineConfig, REPORT_KS};
use keyframe_core::providers::Backend;
use keyframe_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Planner, rank fusion, OCR injection and NMS.
    Planned,
    /// One scene-matcher call on the question plus options.
    SingleQuery,
    Uniform,
    Oracle,
    Blind,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Planned,
        Method::SingleQuery,
        Method::Uniform,
        Method::Oracle,
        Method::Blind,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Planned => "planned",
            Method::SingleQuery => "single-query",
            Method::Uniform => "uniform",
            Method::Oracle => "oracle",
            Method::Blind => "blind",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    /// Keeps texts sharing a word of three or more letters with the query.
    Keyword,
    Accept,
    Reject,
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnswererKind {
    Oracle,
    Random,
    Chat,
}

/// Connection settings for the remote backend and chat clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSettings {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_ms: u64,
    pub max_concurrent: usize,
    pub retries: u32,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key: None,
            model: "default".into(),
            timeout_ms: 30_000,
            max_concurrent: 4,
            retries: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Questions or captions file. Optional with the synthetic backend.
    pub dataset: Option<PathBuf>,
    pub backend: Backend,
    pub synth_spec: Option<PathBuf>,
    /// Score files, OCR files and plan cache for the file backend.
    pub data_root: Option<PathBuf>,
    pub plans: Option<PathBuf>,
    pub remote: RemoteSettings,
    pub pipeline: PipelineConfig,
    pub seed: Option<u64>,
    pub workers: usize,
    pub out: PathBuf,
    pub methods: Vec<Method>,
    pub answerers: Vec<AnswererKind>,
    pub judge: JudgeKind,
    pub ks: Vec<usize>,
    pub exclude_failures: bool,
    /// Fraction of failed records tolerated before the run exits with 1.
    pub max_failure_rate: f64,
}

impl RunConfig {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            dataset: None,
            backend: Backend::File,
            synth_spec: None,
            data_root: None,
            plans: None,
            remote: RemoteSettings::default(),
            pipeline: PipelineConfig::default(),
            seed: None,
            workers: 1,
            out: out.into(),
            methods: vec![Method::Planned],
            answerers: Vec::new(),
            judge: JudgeKind::Keyword,
            ks: REPORT_KS.to_vec(),
            exclude_failures: false,
            max_failure_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::InvalidArgument("K values must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::InvalidArgument(
                "max failure rate must lie in [0, 1]".into(),
            ));
        }
        match self.backend {
            Backend::Synthetic if self.synth_spec.is_none() => Err(Error::InvalidArgument(
                "synthetic backend needs --synth-spec".into(),
            )),
            Backend::File if self.dataset.is_none() => Err(Error::InvalidArgument(
                "file backend needs --dataset".into(),
            )),
            Backend::Remote if self.dataset.is_none() => Err(Error::InvalidArgument(
                "remote backend needs --dataset".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn tau_rule(&self) -> String {
        match self.pipeline.tau_override {
            Some(t) => format!("fixed {t}"),
            None => "min(D/(2K), 10)".into(),
        }
    }

    /// Settings that shape the results, echoed into the report. Output paths
    /// and worker counts are left out so reruns compare byte for byte.
    pub fn echo(&self) -> BTreeMap<String, Value> {
        let p = &self.pipeline;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        BTreeMap::from([
            ("backend".into(), json!(self.backend)),
            ("dataset".into(), json!(path(&self.dataset))),
            ("synth_spec".into(), json!(path(&self.synth_spec))),
            ("k".into(), json!(p.k)),
            ("fps".into(), json!(p.fps)),
            ("mode".into(), json!(p.mode)),
            ("ocr".into(), json!(p.ocr)),
            ("single_call".into(), json!(p.single_call)),
            ("no_tren".into(), json!(p.no_region)),
            ("pad".into(), json!(p.pad)),
            ("tau_rule".into(), json!(self.tau_rule())),
            ("seed".into(), json!(self.seed)),
            (
                "methods".into(),
                json!(self.methods.iter().map(|m| m.name()).collect::<Vec<_>>()),
            ),
            ("answerers".into(), json!(self.answerers)),
            ("judge".into(), json!(self.judge)),
            ("ks".into(), json!(self.ks)),
            ("exclude_failures".into(), json!(self.exclude_failures)),
        ])
    }
}
