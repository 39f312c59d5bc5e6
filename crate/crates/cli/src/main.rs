//! `scope`: the end-to-end pipeline as one binary with a subcommand per stage.
//!
//! Stages talk only through files. Pipeline outputs live under `--out-dir`
//! in `sae/`, `scores/`, `subspace/`, `generations/` and `reports/`; data
//! sources (`gen-planted`, `train-lm`, `extract`) write where `--out` says.

mod args;
mod commands;
mod summary;

use std::process::ExitCode;

use clap::Parser;
use scope_core::ScopeError;

use crate::args::Cli;

/// A flag or input problem detected by the CLI itself. Exits with 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<ScopeError>() {
        Some(ScopeError::Config { .. } | ScopeError::Domain(_) | ScopeError::Tokenization { .. }) => 2,
        _ => 1,
    }
}

/// Renders config errors in terms of the flag that carries the bad value.
fn describe(err: &anyhow::Error) -> String {
    match err.downcast_ref::<ScopeError>() {
        Some(ScopeError::Config { field, reason }) => {
            format!("invalid value for --{}: {reason}", field.replace('_', "-"))
        }
        _ => format!("{err:#}"),
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("SCOPE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("SCOPE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| anyhow::anyhow!("cannot configure thread pool: {e}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
