//! The four batch commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use keyframe_core::eval::{
    blind_baseline, evaluate_dataset, oracle_baseline, read_dataset, read_jsonl, render_table,
    rescore, run_question, siglipq_baseline, uniform_baseline, write_jsonl, Engine, EvalConfig,
    MethodOutput, QueryItem, RecordResult, RetrievalReport,
};
use keyframe_core::ocr::{AcceptAll, Judge, KeywordJudge, RejectAll};
use keyframe_core::plan::{parse_plan, plan_to_value, ToolKind};
use keyframe_core::providers::files::{write_atomic, write_ocr_file, write_score_file};
use keyframe_core::providers::{
    Answerer, Backend, CachedPlanner, ChatAnswerer, ChatClient, ChatJudge, FileOcrSource,
    FileScorer, HttpChatClient, HttpTransport, OcrRecord, OcrSource, OracleAnswerer, PlanCache,
    PlanCacheEntry, PlanSource, RandomAnswerer, RemoteScorer, ScoreFile, Scorer, SynthDatasetSpec,
    SyntheticProvider, Transport, ENV_API_KEY, ENV_CACHE_DIR, ENV_ENDPOINT,
};
use keyframe_core::{Error, FrameTimeline, Result, SelectionResult};

use crate::config::{AnswererKind, JudgeKind, Method, RemoteSettings, RunConfig};

/// Fills endpoint and key from the environment when not given explicitly.
pub fn remote_from_env(mut r: RemoteSettings) -> RemoteSettings {
    if r.endpoint.is_none() {
        r.endpoint = std::env::var(ENV_ENDPOINT).ok().filter(|s| !s.is_empty());
    }
    if r.api_key.is_none() {
        r.api_key = std::env::var(ENV_API_KEY).ok().filter(|s| !s.is_empty());
    }
    r
}

fn transport(r: &RemoteSettings) -> Result<Arc<dyn Transport>> {
    let endpoint = r.endpoint.clone().ok_or_else(|| {
        Error::InvalidArgument(format!("no endpoint configured (set {ENV_ENDPOINT})"))
    })?;
    Ok(Arc::new(HttpTransport::new(
        endpoint,
        r.api_key.clone(),
        Duration::from_millis(r.timeout_ms),
    )))
}

pub fn chat_client(r: &RemoteSettings) -> Result<Arc<dyn ChatClient>> {
    Ok(Arc::new(HttpChatClient::new(
        transport(r)?,
        r.model.clone(),
        r.max_concurrent,
        r.retries,
    )))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlanSummary {
    pub total: usize,
    pub cached: usize,
    pub planned: usize,
    pub fallbacks: usize,
    pub failed: usize,
}

/// Plans every record not yet in the cache at `cache_path` and rewrites the
/// cache. Planner failures are logged and left out of the cache.
pub fn cmd_plan(
    dataset: &Path,
    cache_path: &Path,
    client: Arc<dyn ChatClient>,
    fps: f64,
    workers: usize,
) -> Result<PlanSummary> {
    let items = read_dataset(dataset)?;
    let cache = Arc::new(PlanCache::load(cache_path)?);
    let cached = items.iter().filter(|i| cache.get(&i.id).is_some()).count();
    let planner = CachedPlanner::new(client, cache.clone());
    let failed = AtomicUsize::new(0);
    pool(workers)?.install(|| {
        use rayon::prelude::*;
        items.par_iter().for_each(|item| {
            if let Err(e) = planner.raw_plan(item, fps) {
                log::error!("{}: {e}", item.id);
                failed.fetch_add(1, Ordering::Relaxed);
            }
        })
    });
    cache.save(cache_path)?;
    let failed = failed.into_inner();
    let fallbacks = items
        .iter()
        .filter(|i| cache.get(&i.id).is_some_and(|e| e.fallback))
        .count();
    let summary = PlanSummary {
        total: items.len(),
        cached,
        planned: items.len() - cached - failed,
        fallbacks,
        failed,
    };
    if failed == items.len() {
        return Err(Error::Provider(format!(
            "planner failed on all {failed} records"
        )));
    }
    Ok(summary)
}

fn load_synth_spec(path: &Path, seed: Option<u64>) -> Result<SynthDatasetSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::MissingData {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut spec: SynthDatasetSpec = serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

type Backing = (
    Vec<QueryItem>,
    Arc<dyn Scorer>,
    Arc<dyn PlanSource>,
    Option<Arc<dyn OcrSource>>,
);

/// Providers and dataset for a run.
pub struct Setup {
    pub items: Vec<QueryItem>,
    pub engine: Engine,
    pub answerers: Vec<Box<dyn Answerer>>,
    /// Cache to write back after a remote run.
    pub plan_cache: Option<(Arc<PlanCache>, PathBuf)>,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup> {
    let remote = remote_from_env(cfg.remote.clone());
    let judge: Arc<dyn Judge> = match cfg.judge {
        JudgeKind::Keyword => Arc::new(KeywordJudge),
        JudgeKind::Accept => Arc::new(AcceptAll),
        JudgeKind::Reject => Arc::new(RejectAll),
        JudgeKind::Chat => Arc::new(ChatJudge::new(chat_client(&remote)?)),
    };
    let mut plan_cache = None;
    let (items, scorer, planner, ocr): Backing = match cfg.backend {
        Backend::Synthetic => {
            let spec_path = cfg.synth_spec.as_deref().expect("validated");
            let provider = Arc::new(SyntheticProvider::new(load_synth_spec(
                spec_path, cfg.seed,
            )?)?);
            if (provider.spec().fps - cfg.pipeline.fps).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "--fps {} differs from the synthetic spec's fps {}",
                    cfg.pipeline.fps,
                    provider.spec().fps
                )));
            }
            let items = match &cfg.dataset {
                Some(p) => read_dataset(p)?,
                None => provider
                    .spec()
                    .records()
                    .iter()
                    .map(|r| r.to_item())
                    .collect::<Result<_>>()?,
            };
            (items, provider.clone(), provider.clone(), Some(provider))
        }
        Backend::File => {
            let dataset = cfg.dataset.as_deref().expect("validated");
            let root = cfg
                .data_root
                .clone()
                .unwrap_or_else(|| dataset.parent().unwrap_or(Path::new(".")).to_path_buf());
            let plans = cfg
                .plans
                .clone()
                .unwrap_or_else(|| root.join("plans.jsonl"));
            (
                read_dataset(dataset)?,
                Arc::new(FileScorer::new(&root)),
                Arc::new(PlanCache::load(&plans)?),
                Some(Arc::new(FileOcrSource::new(&root))),
            )
        }
        Backend::Remote => {
            let dataset = cfg.dataset.as_deref().expect("validated");
            let t = transport(&remote)?;
            let plans = cfg
                .plans
                .clone()
                .unwrap_or_else(|| match std::env::var(ENV_CACHE_DIR) {
                    Ok(d) if !d.is_empty() => PathBuf::from(d).join("plans.jsonl"),
                    _ => cfg.out.join("plans.jsonl"),
                });
            let cache = Arc::new(PlanCache::load(&plans)?);
            plan_cache = Some((cache.clone(), plans));
            let ocr: Option<Arc<dyn OcrSource>> = cfg
                .data_root
                .as_ref()
                .map(|r| Arc::new(FileOcrSource::new(r)) as Arc<dyn OcrSource>);
            (
                read_dataset(dataset)?,
                Arc::new(RemoteScorer::new(t, remote.max_concurrent, remote.retries)),
                Arc::new(CachedPlanner::new(chat_client(&remote)?, cache)),
                ocr,
            )
        }
    };
    let mut answerers: Vec<Box<dyn Answerer>> = Vec::new();
    for a in &cfg.answerers {
        answerers.push(match a {
            AnswererKind::Oracle => Box::new(OracleAnswerer),
            AnswererKind::Random => Box::new(RandomAnswerer {
                seed: cfg.seed.unwrap_or(0),
            }),
            AnswererKind::Chat => Box::new(ChatAnswerer::new(
                chat_client(&remote)?,
                remote.model.clone(),
            )),
        });
    }
    Ok(Setup {
        items,
        engine: Engine {
            scorer,
            planner,
            ocr,
            judge,
        },
        answerers,
        plan_cache,
    })
}

/// Runs one method on one record.
pub fn run_method(
    method: Method,
    item: &QueryItem,
    engine: &Engine,
    cfg: &RunConfig,
) -> std::result::Result<MethodOutput, String> {
    let p = &cfg.pipeline;
    let prep = || -> Result<(FrameTimeline, f64)> {
        Ok((
            FrameTimeline::build(&item.video_id, item.duration_s, p.fps)?,
            p.tau_for(item.duration_s)?,
        ))
    };
    let with_tau = |mut s: SelectionResult, tau: f64| {
        s.tau = tau;
        s
    };
    let out: Result<MethodOutput> = match method {
        Method::Planned => {
            return run_question(item, engine, p)
                .map(|o| MethodOutput {
                    selection: o.selection,
                    fallback: o.fallback.is_some(),
                })
                .map_err(|e| e.to_string())
        }
        Method::SingleQuery => prep().and_then(|(tl, tau)| {
            siglipq_baseline(item, engine.scorer.as_ref(), &tl, p.k, tau).map(Into::into)
        }),
        Method::Uniform => prep().and_then(|(tl, tau)| {
            uniform_baseline(&item.id, &tl, p.k).map(|s| with_tau(s, tau).into())
        }),
        Method::Oracle => prep().and_then(|(tl, tau)| {
            oracle_baseline(&item.id, &item.interval, &tl, p.k).map(|s| with_tau(s, tau).into())
        }),
        Method::Blind => prep().map(|(_, tau)| blind_baseline(&item.id, p.k, tau).into()),
    };
    out.map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub report: RetrievalReport,
    pub report_path: PathBuf,
    /// True when some method failed on more records than tolerated.
    pub over_failure_threshold: bool,
}

/// Runs every configured method over the dataset and writes, under `out`,
/// `selections-<method>.jsonl`, `records-<method>.jsonl`, `report.json` and
/// `report.txt`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let setup = setup(cfg)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::Io {
        path: cfg.out.clone(),
        source: e,
    })?;
    let answerers: Vec<&dyn Answerer> = setup.answerers.iter().map(|a| a.as_ref()).collect();
    let eval_cfg = EvalConfig {
        ks: cfg.ks.clone(),
        workers: cfg.workers,
        exclude_failures: cfg.exclude_failures,
    };
    let mut report = RetrievalReport {
        config: cfg.echo(),
        methods: BTreeMap::new(),
    };
    let mut over = false;
    for &method in &cfg.methods {
        log::info!("running {} on {} records", method.name(), setup.items.len());
        let (m, records) = evaluate_dataset(
            &setup.items,
            |item| run_method(method, item, &setup.engine, cfg),
            &answerers,
            &eval_cfg,
        )?;
        for r in records.iter().filter(|r| r.error.is_some()) {
            log::warn!(
                "{} failed on {}: {}",
                method.name(),
                r.id,
                r.error.as_deref().unwrap_or_default()
            );
        }
        if m.counts.failed as f64 > cfg.max_failure_rate * m.counts.records as f64 {
            over = true;
        }
        let selections: Vec<SelectionResult> =
            records.iter().filter_map(|r| r.selection.clone()).collect();
        write_jsonl(
            &cfg.out.join(format!("selections-{}.jsonl", method.name())),
            &selections,
        )?;
        write_jsonl::<RecordResult>(
            &cfg.out.join(format!("records-{}.jsonl", method.name())),
            &records,
        )?;
        report.methods.insert(method.name().to_string(), m);
    }
    if let Some((cache, path)) = &setup.plan_cache {
        cache.save(path)?;
    }
    let report_path = cfg.out.join("report.json");
    write_atomic(&report_path, report.to_canonical_json()?.as_bytes())?;
    write_atomic(
        &cfg.out.join("report.txt"),
        render_table(&report).as_bytes(),
    )?;
    Ok(RunSummary {
        report,
        report_path,
        over_failure_threshold: over,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthSummary {
    pub records: usize,
    pub score_files: usize,
    pub ocr_files: usize,
}

/// Writes a planted-evidence dataset under `out`: `questions.jsonl`, score
/// files for every plan call and the concatenated question, one OCR file per
/// video (possibly empty) and a plan cache, so that a file-backend run
/// reproduces a synthetic-backend run exactly.
pub fn cmd_synth(
    spec_path: &Path,
    out: &Path,
    seed: Option<u64>,
    force: bool,
) -> Result<SynthSummary> {
    let spec = load_synth_spec(spec_path, seed)?;
    let questions = out.join("questions.jsonl");
    let plans = out.join("plans.jsonl");
    if !force {
        for p in [&questions, &plans, &out.join("scores"), &out.join("ocr")] {
            if p.exists() {
                return Err(Error::InvalidArgument(format!(
                    "{} already exists (pass --force to overwrite)",
                    p.display()
                )));
            }
        }
    }
    let provider = SyntheticProvider::new(spec.clone())?;
    let records = spec.records();
    let raw = spec.raw_plan()?;
    let plan_value = plan_to_value(&parse_plan(&raw)?);
    let cache = PlanCache::new();
    let mut summary = SynthSummary {
        records: records.len(),
        ..SynthSummary::default()
    };
    for r in &records {
        let item = r.to_item()?;
        let tl = FrameTimeline::build(&r.video_id, r.duration_s, spec.fps)?;
        let mut queries: Vec<(ToolKind, String)> = spec
            .calls
            .iter()
            .map(|c| (c.tool, c.query.clone()))
            .collect();
        queries.push((ToolKind::SceneMatcher, item.concatenated_query()));
        queries.dedup();
        for (tool, query) in queries {
            let scores = provider.score(&r.video_id, tool, &query, &tl)?;
            write_score_file(out, &ScoreFile::new(&r.video_id, tool, &query, &tl, scores))?;
            summary.score_files += 1;
        }
        let ocr: Vec<OcrRecord> = provider
            .ocr_records(&r.video_id, &tl)?
            .into_iter()
            .map(|(t, text, conf)| OcrRecord {
                video_id: r.video_id.clone(),
                t,
                text,
                conf,
            })
            .collect();
        write_ocr_file(out, &r.video_id, &ocr)?;
        summary.ocr_files += 1;
        cache.insert(PlanCacheEntry {
            question_id: r.question_id.clone(),
            raw: raw.clone(),
            plan: plan_value.clone(),
            fallback: false,
        });
    }
    write_jsonl(&questions, &records)?;
    cache.save(&plans)?;
    Ok(summary)
}

/// Re-scores a selections file against a dataset without any providers.
pub fn cmd_eval(
    selections: &Path,
    dataset: &Path,
    ks: &[usize],
    name: &str,
) -> Result<RetrievalReport> {
    let sels: Vec<SelectionResult> = read_jsonl(selections)?;
    let items = read_dataset(dataset)?;
    let cfg = EvalConfig {
        ks: ks.to_vec(),
        ..EvalConfig::default()
    };
    let m = rescore(&sels, &items, &cfg)?;
    Ok(RetrievalReport {
        config: BTreeMap::from([
            (
                "dataset".into(),
                serde_json::json!(dataset.display().to_string()),
            ),
            (
                "selections".into(),
                serde_json::json!(selections.display().to_string()),
            ),
            ("ks".into(), serde_json::json!(ks)),
        ]),
        methods: BTreeMap::from([(name.to_string(), m)]),
    })
}
