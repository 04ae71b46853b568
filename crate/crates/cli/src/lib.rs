//! Batch commands behind the `keyframe` binary.

pub mod args;
pub mod commands;
pub mod config;

pub use commands::{cmd_eval, cmd_plan, cmd_run, cmd_synth, PlanSummary, RunSummary, SynthSummary};
pub use config::{AnswererKind, JudgeKind, Method, RemoteSettings, RunConfig};

use keyframe_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURES: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Exit code for an error: bad input and configuration give 2, runtime
/// failures 1.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_)
        | Error::Validation(_)
        | Error::MissingData { .. }
        | Error::Parse { .. }
        | Error::Json(_) => EXIT_CONFIG,
        _ => EXIT_FAILURES,
    }
}
