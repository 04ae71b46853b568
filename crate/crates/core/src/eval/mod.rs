//! Datasets, metrics, baselines and the end-to-end pipeline.

pub mod baselines;
pub mod metrics;
pub mod pipeline;
pub mod records;
pub mod report;

pub use baselines::{blind_baseline, oracle_baseline, siglipq_baseline, uniform_baseline};
pub use metrics::{hit_at_k, normalized_recall};
pub use pipeline::{
    rank_with_plan, resolve_plan, run_question, Engine, PipelineConfig, QuestionOutcome, Stage,
    StageError,
};
pub use records::{
    read_dataset, read_jsonl, write_jsonl, CaptionRecord, DatasetRecord, QueryItem, QuestionRecord,
    Split,
};
pub use report::{
    evaluate_dataset, render_table, rescore, Counts, EvalConfig, MethodOutput, MethodReport,
    RecordResult, RetrievalReport, REPORT_KS,
};
