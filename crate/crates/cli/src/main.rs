use std::process::ExitCode;

use clap::Parser;
use keyframe_cli::args::{Cli, Command};
use keyframe_cli::commands::{chat_client, remote_from_env};
use keyframe_cli::{cmd_eval, cmd_plan, cmd_run, cmd_synth, exit_code, EXIT_CONFIG, EXIT_FAILURES};
use keyframe_core::eval::render_table;
use keyframe_core::providers::files::write_atomic;
use keyframe_core::Result;

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Plan(a) => {
            let client = chat_client(&remote_from_env(a.remote.settings()))?;
            let s = cmd_plan(&a.dataset, &a.plans, client, a.fps, a.workers)?;
            println!(
                "{} records: {} cached, {} planned ({} fallback), {} failed",
                s.total, s.cached, s.planned, s.fallbacks, s.failed
            );
            Ok(0)
        }
        Command::Run(a) => {
            let s = cmd_run(&a.into_config())?;
            print!("{}", render_table(&s.report));
            println!("report: {}", s.report_path.display());
            Ok(if s.over_failure_threshold {
                EXIT_FAILURES
            } else {
                0
            })
        }
        Command::Synth(a) => {
            let s = cmd_synth(&a.spec, &a.out, a.seed, a.force)?;
            println!(
                "{} records, {} score files, {} OCR files in {}",
                s.records,
                s.score_files,
                s.ocr_files,
                a.out.display()
            );
            Ok(0)
        }
        Command::Eval(a) => {
            let report = cmd_eval(&a.selections, &a.dataset, &a.ks, &a.name)?;
            if let Some(out) = &a.out {
                write_atomic(out, report.to_canonical_json()?.as_bytes())?;
            }
            print!("{}", render_table(&report));
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
