//! The `multistain` command line: `fit`, `normalize`, `train`, `eval`,
//! `tiles` and `report`.
//!
//! Settings resolve as flags, then the `--config` file, then defaults, and
//! every run persists what it resolved as `resolved_config.json` next to its
//! outputs. Exit code 0 means success, 1 that some inputs failed while the
//! rest were processed, and 2 a configuration or fitting failure, reported as
//! one JSON object on stderr.

mod args;
mod commands;
mod config;
mod report;

pub use args::{Cli, Command, EvalCommand};
pub use config::RunConfig;
pub use report::{collect_rows, render_scatter, render_table, sustained, Interval, ReportRow, DEFAULT_BASELINE};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::json;

use crate::imaging::ImagingError;
use crate::metrics::MetricsError;
use crate::msgan::MsganError;
use crate::stainsep::StainError;
use crate::tiling::TilingError;

/// A failure that ends the run with exit code 2.
#[derive(Clone, Debug, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: &str, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into() }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new("IoError", format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind, "message": self.message }).to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

macro_rules! from_kinded {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::new(e.kind(), e.to_string())
            }
        }
    )*};
}

from_kinded!(StainError, MsganError, MetricsError, TilingError, ImagingError);

/// How a command that ran to completion went.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some inputs failed; everything else was written.
    Partial,
}

pub(crate) struct Context {
    /// From `--seed` or the config file; commands pick their own fallback.
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub quiet: bool,
    pub config: RunConfig,
}

impl Context {
    pub fn say(&self, line: &str) {
        if !self.quiet {
            println!("{line}");
        }
    }

    /// The configuration as resolved from flags, file and defaults.
    pub fn resolved(&self) -> RunConfig {
        RunConfig { seed: Some(self.seed.unwrap_or(0)), threads: self.threads, quiet: Some(self.quiet), ..self.config.clone() }
    }

    /// Persists `config` and the command's arguments at `path`.
    pub fn write_resolved(&self, path: &Path, command: &str, args: &impl Serialize, config: &RunConfig) -> Result<(), CliError> {
        let doc = json!({
            "kind": "resolved_config",
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "args": args,
            "config": config,
        });
        write_file(path, pretty(&doc).as_bytes())
    }
}

pub(crate) fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    crate::io_util::write_atomic(path, bytes).map_err(|e| CliError::io(path, e))
}

/// `dir/name.ext` becomes `dir/name.resolved_config.json`.
pub(crate) fn sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    out.with_file_name(format!("{stem}.resolved_config.json"))
}

/// PNG files under `dir`, sorted by path; with `recursive`, subdirectories
/// are included.
pub(crate) fn list_pngs(dir: &Path, recursive: bool) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| CliError::io(&d, e))? {
            let path = entry.map_err(|e| CliError::io(&d, e))?.path();
            if path.is_dir() {
                if recursive {
                    stack.push(path);
                }
            } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn resolve(cli: &Cli) -> Result<Context, CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let threads = cli.threads.or(config.threads);
    if threads == Some(0) {
        return Err(CliError::new("InvalidConfig", "threads must be at least 1"));
    }
    Ok(Context {
        seed: cli.seed.or(config.seed),
        threads,
        quiet: cli.quiet || config.quiet.unwrap_or(false),
        config,
    })
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let ctx = resolve(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::new("InvalidConfig", e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Fit(a) => commands::fit(&ctx, a),
        Command::Normalize(a) => commands::normalize(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Eval(EvalCommand::Ssim(a)) => commands::eval_ssim(&ctx, a),
        Command::Eval(EvalCommand::Fid(a)) => commands::eval_fid(&ctx, a),
        Command::Tiles(a) => commands::tiles(&ctx, a),
        Command::Report(a) => report::run(&ctx, a),
    })
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.exit_code() == 0 => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", CliError::new("UsageError", e.to_string().trim_end()).to_json());
            return 2;
        }
    };
    match execute(&cli) {
        Ok(Outcome::Success) => 0,
        Ok(Outcome::Partial) => 1,
        Err(e) => {
            eprintln!("{}", e.to_json());
            2
        }
    }
}
