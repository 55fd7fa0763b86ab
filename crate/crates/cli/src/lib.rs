//! Configuration loading, command dispatch and run manifests for the
//! `stubborn` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

pub use commands::{run_command, CheckSummary, Command, CommandOutput};
pub use config::{load_config, parse_config, Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] stubborn_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        }
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config_path: PathBuf,
    pub overrides: Overrides,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub status: &'static str,
    pub exit_code: u8,
    pub error: Option<String>,
    pub config_path: String,
    pub seed: Option<u64>,
    pub config: Option<serde_json::Value>,
    pub duration_seconds: f64,
    pub checks: Vec<CheckSummary>,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

/// Loads the config, runs the command and writes the manifest. Returns the
/// process exit code.
pub fn execute(inv: &Invocation) -> u8 {
    let started = Instant::now();
    let loaded = std::fs::read_to_string(&inv.config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", inv.config_path.display())))
        .and_then(|text| parse_config(&text, inv.overrides));

    if let Err(e) = std::fs::create_dir_all(&inv.out_dir) {
        eprintln!("error: {}", CliError::io(&inv.out_dir, e));
        return EXIT_USAGE;
    }

    let outcome = loaded
        .as_ref()
        .map_err(|e| CliError::Config(e.to_string()))
        .and_then(|cfg| run_command(inv.command, cfg, &inv.out_dir));

    let (status, code, error, output) = match outcome {
        Ok(out) if out.all_passed() => ("ok", EXIT_OK, None, out),
        Ok(out) => ("check_failure", EXIT_FAILURE, None, out),
        Err(e) => (
            "error",
            e.exit_code(),
            Some(e.to_string()),
            CommandOutput::default(),
        ),
    };
    if let Some(msg) = &error {
        eprintln!("error: {msg}");
    }
    for c in output.checks.iter().filter(|c| !c.passed) {
        eprintln!("check failed: {}", c.name);
    }

    let cfg = loaded.as_ref().ok();
    let manifest = Manifest {
        command: inv.command.name(),
        version: env!("CARGO_PKG_VERSION"),
        status,
        exit_code: code,
        error,
        config_path: inv.config_path.display().to_string(),
        seed: cfg.map(|c| c.numerics.seed).or(inv.overrides.seed),
        config: cfg.map(RunConfig::echo),
        duration_seconds: started.elapsed().as_secs_f64(),
        checks: output.checks,
        files: output
            .files
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        warnings: output.warnings,
    };
    let path = inv.out_dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    if let Err(e) = std::fs::write(&path, text) {
        eprintln!("error: {}", CliError::io(&path, e));
        return code.max(EXIT_FAILURE);
    }
    code
}
