use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stubborn_core::control::{policy_table, SelectionConfig};
use stubborn_core::density::{evolve, DensityGrid, KernelOptions, PolicyField, Stepper};
use stubborn_core::dynamics::{simulate_batch, write_paths_csv, Boundary, ConstantPolicy};
use stubborn_core::payoff::expected_payoff;
use stubborn_core::{Error, Problem};

use crate::checks;
use crate::config::{RunConfig, StepperName};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Simulate,
    Sweep,
    Optimize,
    Density,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Optimize => "optimize",
            Command::Density => "density",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub checks: Vec<CheckSummary>,
    pub warnings: Vec<String>,
}

impl CommandOutput {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const BELOW_DOMAIN_STATUS: &str = "state below closed-form domain";

pub use stubborn_core::text::decimal as num;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn run_command(
    command: Command,
    cfg: &RunConfig,
    out_dir: &Path,
) -> Result<CommandOutput, CliError> {
    match command {
        Command::Simulate => simulate(cfg, out_dir),
        Command::Sweep => sweep(cfg, out_dir),
        Command::Optimize => optimize(cfg, out_dir),
        Command::Density => density(cfg, out_dir),
        Command::Validate => validate(cfg, out_dir),
    }
}

fn problem_of(cfg: &RunConfig) -> Problem {
    Problem::new(cfg.model, cfg.payoff, cfg.lagrange, cfg.numerics.x0)
}

fn simulate(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let n = &cfg.numerics;
    let policy = ConstantPolicy::new(cfg.simulate.control);
    let paths = simulate_batch(
        n.x0,
        &policy,
        &cfg.model,
        n.dt,
        cfg.payoff.horizon,
        n.seed,
        cfg.simulate.n_paths,
        Boundary::Absorb,
    )?;
    let path = out_dir.join("paths.csv");
    let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut w = BufWriter::new(file);
    write_paths_csv(&paths, &mut w).map_err(|e| CliError::io(&path, e))?;
    std::io::Write::flush(&mut w).map_err(|e| CliError::io(&path, e))?;
    Ok(CommandOutput {
        files: vec![path],
        ..Default::default()
    })
}

fn sweep(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let n = &cfg.numerics;
    let mut out = String::from("u,J_mean,J_stderr,invalid_fraction\n");
    for i in 0..n.u_grid_n {
        let u = i as f64 / (n.u_grid_n - 1) as f64;
        let policy = ConstantPolicy::new(u);
        match expected_payoff(
            n.x0,
            &policy,
            &cfg.model,
            &cfg.payoff,
            n.dt,
            n.n_paths,
            n.seed,
        ) {
            Ok(e) => writeln!(
                out,
                "{},{},{},{}",
                num(u),
                num(e.mean),
                num(e.std_error),
                num(e.invalid_fraction)
            ),
            Err(Error::CostSingular) => writeln!(out, "{},NaN,NaN,1", num(u)),
            Err(e) => return Err(e.into()),
        }
        .expect("writing to a String");
    }
    let path = out_dir.join("sweep.csv");
    write_file(&path, &out)?;
    Ok(CommandOutput {
        files: vec![path],
        ..Default::default()
    })
}

fn optimize(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let problem = problem_of(cfg);
    let s_grid = cfg.optimize.s_grid.points();
    let x_grid = cfg.numerics.x_grid.points();
    let selection = SelectionConfig {
        dt: cfg.numerics.dt,
        n_paths: cfg.optimize.selection_paths,
        seed: cfg.numerics.seed,
    };
    let table = policy_table(&s_grid, &x_grid, &problem, cfg.modes, &selection);
    let flags = cfg.modes.to_string();
    let mut out = String::from("s,x,u_star,u_unclamped,residual,n_candidates,mode_flags,status\n");
    let cells = s_grid
        .iter()
        .flat_map(|&s| x_grid.iter().map(move |&x| (s, x)));
    for ((s, x), cell) in cells.zip(table) {
        match cell {
            Ok(r) => writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                num(s),
                num(x),
                num(r.u_star.value()),
                num(r.u_unclamped),
                num(r.residual),
                r.u_candidates.len(),
                flags,
                r.status.reason()
            ),
            Err(Error::BelowDomain) => {
                writeln!(
                    out,
                    "{},{},,,,0,{},{}",
                    num(s),
                    num(x),
                    flags,
                    BELOW_DOMAIN_STATUS
                )
            }
            Err(e) => return Err(e.into()),
        }
        .expect("writing to a String");
    }
    let path = out_dir.join("optimize.csv");
    write_file(&path, &out)?;
    Ok(CommandOutput {
        files: vec![path],
        ..Default::default()
    })
}

fn density(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let problem = problem_of(cfg);
    let d = &cfg.density;
    let policy = ConstantPolicy::new(d.control);
    let field = PolicyField {
        problem: &problem,
        policy: &policy,
        derivative_mode: cfg.modes.derivative_mode,
    };
    let g = &cfg.numerics.x_grid;
    let initial = DensityGrid::gaussian(
        g.min,
        g.max,
        d.n_points,
        d.initial_mean.unwrap_or(cfg.numerics.x0),
        d.initial_sd,
        0.0,
    )?;
    let opts = KernelOptions {
        exponent_mode: cfg.modes.kernel_exponent_mode,
        gradient_correction: d.gradient_correction,
        keep_gaussian_prefactor: d.keep_gaussian_prefactor,
    };
    let stepper = match d.stepper {
        StepperName::Kernel => Stepper::Kernel,
        StepperName::Schrodinger => Stepper::Schrodinger,
    };
    let grids = evolve(initial, d.eps, d.n_steps, &field, opts, stepper)?;
    let mut out = String::from("s,x,psi\n");
    let mut warnings: Vec<String> = Vec::new();
    for (k, grid) in grids.iter().enumerate() {
        for w in &grid.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
        if k % d.snapshot_every != 0 && k != d.n_steps {
            continue;
        }
        for (x, psi) in grid.x_grid.iter().zip(&grid.psi) {
            writeln!(out, "{},{},{}", num(grid.s), num(*x), num(*psi))
                .expect("writing to a String");
        }
    }
    let path = out_dir.join("density.csv");
    write_file(&path, &out)?;
    Ok(CommandOutput {
        files: vec![path],
        warnings,
        ..Default::default()
    })
}

fn validate(cfg: &RunConfig, out_dir: &Path) -> Result<CommandOutput, CliError> {
    let report = checks::run_all(cfg);
    let checks = report
        .suites
        .iter()
        .map(|s| CheckSummary {
            name: s.name.clone(),
            passed: s.passed,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    let path = out_dir.join("validate.json");
    write_file(&path, &text)?;
    Ok(CommandOutput {
        files: vec![path],
        checks,
        ..Default::default()
    })
}
