use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use stubborn_cli::{execute, Command, Invocation, Overrides, EXIT_USAGE};

/// Optimal stubbornness simulation and validation.
#[derive(Debug, Parser)]
#[command(name = "stubborn", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "n-paths")]
    n_paths: Option<usize>,
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: PathBuf,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("STUBBORN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| format!("STUBBORN_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let inv = Invocation {
        command: args.command,
        config_path: args.config,
        overrides: Overrides {
            seed: args.seed,
            dt: args.dt,
            n_paths: args.n_paths,
        },
        out_dir: args.out_dir,
    };
    ExitCode::from(execute(&inv))
}
