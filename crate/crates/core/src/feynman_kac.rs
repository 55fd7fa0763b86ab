//! Monte Carlo estimator of the conditional-expectation representation
//! `φ(s, x) = E[T(t, x(t))·e^{−∫V} + ∫ Θ·e^{−∫V} ds₁ | x(s) = x]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{diffusion, drift, step_count, walk_path, Boundary, Policy};
use crate::error::{Error, Result};
use crate::model::{ModelParams, State};
use crate::stats::mean_and_stderr;

/// A function of `(s, x, u)`.
pub type RateFn = Box<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// A function of `(t, x)`.
pub type TerminalFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub struct FkProblem {
    pub potential: RateFn,
    pub source: RateFn,
    pub terminal: TerminalFn,
    pub model: ModelParams,
    pub policy: Box<dyn Policy + Send>,
    pub horizon: f64,
}

impl FkProblem {
    /// Zero potential, source and terminal value.
    pub fn new(model: ModelParams, policy: Box<dyn Policy + Send>, horizon: f64) -> Self {
        Self {
            potential: Box::new(|_, _, _| 0.0),
            source: Box::new(|_, _, _| 0.0),
            terminal: Box::new(|_, _| 0.0),
            model,
            policy,
            horizon,
        }
    }

    pub fn with_potential(
        mut self,
        v: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.potential = Box::new(v);
        self
    }

    pub fn with_source(
        mut self,
        theta: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.source = Box::new(theta);
        self
    }

    pub fn with_terminal(mut self, t: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Box::new(t);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

fn finite(v: f64, what: &str, s: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} is not finite at s = {s}, x = {x}"
        )))
    }
}

/// Both inner integrals are left-endpoint sums on the simulation grid.
pub fn fk_estimate(
    problem: &FkProblem,
    s: f64,
    x: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<FkEstimate> {
    if !(s < problem.horizon) {
        return Err(Error::InvalidArgument(format!(
            "start {s} must precede horizon {}",
            problem.horizon
        )));
    }
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let start = State::new(s, x)?;
    let n_steps = step_count(problem.horizon - s, dt)?;
    let policy = problem.policy.as_ref();
    let values = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut killed = 0.0f64;
            let mut sourced = 0.0;
            let end = walk_path(
                start,
                n_steps,
                dt,
                policy,
                &problem.model,
                seed,
                i,
                Boundary::Absorb,
                |v| {
                    let u = v.u.value();
                    let theta = finite((problem.source)(v.s, v.x, u), "source", v.s, v.x)?;
                    let pot = finite((problem.potential)(v.s, v.x, u), "potential", v.s, v.x)?;
                    sourced += theta * (-killed).exp() * dt;
                    killed += pot * dt;
                    Ok(())
                },
            )?;
            let terminal = finite(
                (problem.terminal)(problem.horizon, end.x),
                "terminal",
                problem.horizon,
                end.x,
            )?;
            Ok(terminal * (-killed).exp() + sourced)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = mean_and_stderr(&values);
    Ok(FkEstimate {
        mean,
        std_error,
        n_paths,
    })
}

/// Values of `φ` on a uniform `(s, x)` grid, row-major with `s` slow.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiGrid {
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// Per-node standard errors; zeros for exact values.
    pub std_errors: Vec<f64>,
}

impl PhiGrid {
    pub fn from_fn(s: Vec<f64>, x: Vec<f64>, phi: impl Fn(f64, f64) -> f64) -> Self {
        let values: Vec<f64> = s
            .iter()
            .flat_map(|&si| x.iter().map(move |&xj| (si, xj)))
            .map(|(a, b)| phi(a, b))
            .collect();
        let std_errors = vec![0.0; values.len()];
        Self {
            s,
            x,
            values,
            std_errors,
        }
    }

    fn at(&self, i: usize, j: usize) -> (f64, f64) {
        let k = i * self.x.len() + j;
        (self.values[k], self.std_errors[k])
    }
}

/// [`fk_estimate`] at every node, with the same seed at each node.
pub fn fk_grid(
    problem: &FkProblem,
    s: Vec<f64>,
    x: Vec<f64>,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PhiGrid> {
    let mut values = Vec::with_capacity(s.len() * x.len());
    let mut std_errors = Vec::with_capacity(s.len() * x.len());
    for &si in &s {
        for &xj in &x {
            let e = fk_estimate(problem, si, xj, dt, n_paths, seed)?;
            values.push(e.mean);
            std_errors.push(e.std_error);
        }
    }
    Ok(PhiGrid {
        s,
        x,
        values,
        std_errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FkResidual {
    /// `−Vφ + Θ + φ_s + φ_x·μ + ½φ_xx·(σ₁ − σ₂x)²`.
    pub residual: f64,
    /// Propagated from node standard errors, treating nodes as independent.
    pub std_error: f64,
    /// Sum of the absolute values of the five terms.
    pub scale: f64,
}

fn uniform_step(g: &[f64], k: usize, what: &str) -> Result<f64> {
    if k == 0 || k + 1 >= g.len() {
        return Err(Error::InsufficientGrid(format!(
            "{what} index {k} has no neighbours"
        )));
    }
    let (lo, hi) = (g[k] - g[k - 1], g[k + 1] - g[k]);
    if !(lo > 0.0) || ((hi - lo) / lo).abs() > 1e-9 {
        return Err(Error::InsufficientGrid(format!(
            "{what} grid is not uniform at index {k}"
        )));
    }
    Ok(lo)
}

/// Central-difference residual of the drift-side terms at node `(i, j)`.
pub fn fk_pde_residual_check(
    problem: &FkProblem,
    phi: &PhiGrid,
    i: usize,
    j: usize,
) -> Result<FkResidual> {
    if phi.values.len() != phi.s.len() * phi.x.len() || phi.std_errors.len() != phi.values.len() {
        return Err(Error::InsufficientGrid(
            "grid values do not match its axes".into(),
        ));
    }
    let ds = uniform_step(&phi.s, i, "s")?;
    let dx = uniform_step(&phi.x, j, "x")?;
    let (s, x) = (phi.s[i], phi.x[j]);
    let state = State::new(s, x)?;
    let u = problem.policy.control(&state);
    let mu = drift(&state, u, &problem.model);
    let sig = diffusion(&state, &problem.model);
    let half_var = 0.5 * sig * sig;
    let v = (problem.potential)(s, x, u.value());
    let theta = (problem.source)(s, x, u.value());

    let (c, _) = phi.at(i, j);
    let (sp, _) = phi.at(i + 1, j);
    let (sm, _) = phi.at(i - 1, j);
    let (xp, _) = phi.at(i, j + 1);
    let (xm, _) = phi.at(i, j - 1);
    let terms = [
        -v * c,
        theta,
        (sp - sm) / (2.0 * ds),
        (xp - xm) / (2.0 * dx) * mu,
        half_var * (xp - 2.0 * c + xm) / (dx * dx),
    ];
    let residual = terms.iter().sum();
    let scale = terms.iter().map(|t| t.abs()).sum();

    // The residual is linear in the node values; these are its weights.
    let weights = [
        ((i, j), -v - 2.0 * half_var / (dx * dx)),
        ((i + 1, j), 1.0 / (2.0 * ds)),
        ((i - 1, j), -1.0 / (2.0 * ds)),
        ((i, j + 1), mu / (2.0 * dx) + half_var / (dx * dx)),
        ((i, j - 1), -mu / (2.0 * dx) + half_var / (dx * dx)),
    ];
    let variance: f64 = weights
        .iter()
        .map(|&((a, b), w)| (w * phi.at(a, b).1).powi(2))
        .sum();
    Ok(FkResidual {
        residual,
        std_error: variance.sqrt(),
        scale,
    })
}
