//! Command-line flags.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use keyframe_core::eval::PipelineConfig;
use keyframe_core::ocr::OcrConfig;
use keyframe_core::providers::Backend;
use keyframe_core::MergeMode;

use crate::config::{AnswererKind, JudgeKind, Method, RemoteSettings, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "keyframe",
    version,
    about = "Query-conditioned keyframe retrieval and evaluation"
)]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate and cache planner output for every record.
    Plan(PlanArgs),
    /// Retrieve frames for every record and write selections and a report.
    Run(Box<RunArgs>),
    /// Materialize a planted-evidence dataset on disk.
    Synth(SynthArgs),
    /// Re-score an existing selections file.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BackendArg {
    File,
    Synthetic,
    Remote,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Rank,
    Raw,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Planned,
    SingleQuery,
    Uniform,
    Oracle,
    Blind,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum JudgeArg {
    Keyword,
    Accept,
    Reject,
    Chat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AnswererArg {
    Oracle,
    Random,
    Chat,
}

#[derive(Debug, Args)]
pub struct RemoteArgs {
    /// Service base URL (defaults to $RM_ENDPOINT).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Chat model name sent with planner, judge and answerer requests.
    #[arg(long, default_value = "default")]
    pub model: String,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 4)]
    pub max_concurrent: usize,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
}

impl RemoteArgs {
    pub fn settings(&self) -> RemoteSettings {
        RemoteSettings {
            endpoint: self.endpoint.clone(),
            api_key: None,
            model: self.model.clone(),
            timeout_ms: self.timeout_ms,
            max_concurrent: self.max_concurrent,
            retries: self.retries,
        }
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Plan cache file, read and rewritten.
    #[arg(long)]
    pub plans: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub fps: f64,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
    #[command(flatten)]
    pub remote: RemoteArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Questions or captions file (JSON Lines).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "file")]
    pub backend: BackendArg,
    /// Dataset spec for the synthetic backend.
    #[arg(long)]
    pub synth_spec: Option<PathBuf>,
    /// Directory holding score files, OCR files and plans.jsonl. Defaults to
    /// the dataset's directory.
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    /// Plan cache file.
    #[arg(long)]
    pub plans: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 2.0)]
    pub fps: f64,
    #[arg(long, value_enum, default_value = "rank")]
    pub mode: ModeArg,
    /// Inject OCR evidence (default).
    #[arg(long, overrides_with = "no_ocr")]
    pub ocr: bool,
    #[arg(long)]
    pub no_ocr: bool,
    /// Drop region-matcher calls from plans.
    #[arg(long)]
    pub no_tren: bool,
    /// Replace every plan with one scene-matcher call on the full question.
    #[arg(long)]
    pub single_call: bool,
    /// Fixed NMS spacing in seconds instead of min(D/(2K), 10).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Pad short selections with uniform frames.
    #[arg(long)]
    pub pad: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "planned")]
    pub methods: Vec<MethodArg>,
    #[arg(long = "answerer", value_enum)]
    pub answerers: Vec<AnswererArg>,
    #[arg(long, value_enum, default_value = "keyword")]
    pub judge: JudgeArg,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    pub ks: Vec<usize>,
    /// Leave failed records out of denominators.
    #[arg(long)]
    pub exclude_failures: bool,
    /// Fraction of failed records tolerated before exiting with status 1.
    #[arg(long, default_value_t = 0.0)]
    pub max_failure_rate: f64,
    #[command(flatten)]
    pub remote: RemoteArgs,
}

impl RunArgs {
    pub fn into_config(self) -> RunConfig {
        let mut cfg = RunConfig::new(self.out.clone());
        cfg.dataset = self.dataset;
        cfg.backend = match self.backend {
            BackendArg::File => Backend::File,
            BackendArg::Synthetic => Backend::Synthetic,
            BackendArg::Remote => Backend::Remote,
        };
        cfg.synth_spec = self.synth_spec;
        cfg.data_root = self.data_root;
        cfg.plans = self.plans;
        cfg.remote = self.remote.settings();
        cfg.pipeline = PipelineConfig {
            k: self.k,
            fps: self.fps,
            mode: match self.mode {
                ModeArg::Rank => MergeMode::Rank,
                ModeArg::Raw => MergeMode::Raw,
            },
            ocr: !self.no_ocr,
            ocr_cfg: OcrConfig::default(),
            single_call: self.single_call,
            no_region: self.no_tren,
            tau_override: self.tau,
            pad: self.pad,
        };
        cfg.seed = self.seed;
        cfg.workers = self.workers;
        cfg.methods = self
            .methods
            .iter()
            .map(|m| match m {
                MethodArg::Planned => Method::Planned,
                MethodArg::SingleQuery => Method::SingleQuery,
                MethodArg::Uniform => Method::Uniform,
                MethodArg::Oracle => Method::Oracle,
                MethodArg::Blind => Method::Blind,
            })
            .collect();
        cfg.methods.sort();
        cfg.methods.dedup();
        cfg.answerers = self
            .answerers
            .iter()
            .map(|a| match a {
                AnswererArg::Oracle => AnswererKind::Oracle,
                AnswererArg::Random => AnswererKind::Random,
                AnswererArg::Chat => AnswererKind::Chat,
            })
            .collect();
        cfg.judge = match self.judge {
            JudgeArg::Keyword => JudgeKind::Keyword,
            JudgeArg::Accept => JudgeKind::Accept,
            JudgeArg::Reject => JudgeKind::Reject,
            JudgeArg::Chat => JudgeKind::Chat,
        };
        cfg.ks = self.ks;
        cfg.exclude_failures = self.exclude_failures;
        cfg.max_failure_rate = self.max_failure_rate;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the seed in the dataset spec file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite an existing dataset.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub selections: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
    pub ks: Vec<usize>,
    /// Row label in the report.
    #[arg(long, default_value = "selections")]
    pub name: String,
    /// Write the canonical report JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
