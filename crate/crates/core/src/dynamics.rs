//! Drift and diffusion of the goal dynamics, Euler–Maruyama simulation and
//! the exact one-step transition densities of the discretised SDE.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Control, ModelParams, State};
use crate::quadrature::trapezoid;
use crate::rng::NoiseStream;
use crate::text::decimal;

/// Tolerance on `horizon/dt` being an integer.
pub const STEP_ROUNDING_TOL: f64 = 1e-9;

/// A feedback rule `u(s, x)`.
pub trait Policy: Sync {
    fn control(&self, state: &State) -> Control;
}

impl<F> Policy for F
where
    F: Fn(&State) -> f64 + Sync,
{
    fn control(&self, state: &State) -> Control {
        Control::clamped(self(state))
    }
}

/// `u(s, x) ≡ u`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub Control);

impl ConstantPolicy {
    pub fn new(u: f64) -> Self {
        Self(Control::clamped(u))
    }
}

impl Policy for ConstantPolicy {
    fn control(&self, _state: &State) -> Control {
        self.0
    }
}

/// Feedback table on an `(s, x)` grid, bilinear in between and flat outside.
#[derive(Debug, Clone)]
pub struct TabulatedPolicy {
    s_grid: Vec<f64>,
    x_grid: Vec<f64>,
    /// Row-major: `values[i * x_grid.len() + j] = u(s_i, x_j)`.
    values: Vec<f64>,
}

impl TabulatedPolicy {
    pub fn new(s_grid: Vec<f64>, x_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let increasing = |g: &[f64]| !g.is_empty() && g.windows(2).all(|w| w[1] > w[0]);
        if !increasing(&s_grid) || !increasing(&x_grid) {
            return Err(Error::InvalidArgument(
                "policy grids must be strictly increasing".into(),
            ));
        }
        if values.len() != s_grid.len() * x_grid.len() {
            return Err(Error::InvalidArgument(format!(
                "policy table has {} values, expected {}",
                values.len(),
                s_grid.len() * x_grid.len()
            )));
        }
        Ok(Self {
            s_grid,
            x_grid,
            values,
        })
    }

    fn locate(grid: &[f64], v: f64) -> (usize, usize, f64) {
        if grid.len() == 1 || v <= grid[0] {
            return (0, 0, 0.0);
        }
        let last = grid.len() - 1;
        if v >= grid[last] {
            return (last, last, 0.0);
        }
        let hi = grid.partition_point(|g| *g <= v);
        let lo = hi - 1;
        (lo, hi, (v - grid[lo]) / (grid[hi] - grid[lo]))
    }
}

impl Policy for TabulatedPolicy {
    fn control(&self, state: &State) -> Control {
        let (i0, i1, ws) = Self::locate(&self.s_grid, state.s);
        let (j0, j1, wx) = Self::locate(&self.x_grid, state.x);
        let n = self.x_grid.len();
        let v = |i: usize, j: usize| self.values[i * n + j];
        let lo = v(i0, j0) * (1.0 - wx) + v(i0, j1) * wx;
        let hi = v(i1, j0) * (1.0 - wx) + v(i1, j1) * wx;
        Control::clamped(lo * (1.0 - ws) + hi * ws)
    }
}

/// Behaviour of the scheme when a step would leave `x ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Clamp to 0 and continue.
    #[default]
    Absorb,
    /// No clamping. Only defined while the drift needs no `√x` of a negative
    /// state (i.e. `a = 0` once the path goes negative).
    Free,
}

/// `a·√x − σ₂·x − u`.
pub fn drift(state: &State, u: Control, model: &ModelParams) -> f64 {
    model.a * state.x.sqrt() - model.sigma2 * state.x - u.value()
}

/// `σ₁ − σ₂·x`. May be negative; it only ever enters squared or multiplied
/// by a symmetric draw.
pub fn diffusion(state: &State, model: &ModelParams) -> f64 {
    model.sigma1 - model.sigma2 * state.x
}

fn drift_unchecked(x: f64, u: f64, model: &ModelParams) -> Result<f64> {
    let root = if x >= 0.0 {
        model.a * x.sqrt()
    } else if model.a == 0.0 {
        0.0
    } else {
        return Err(Error::NegativeState(x));
    };
    Ok(root - model.sigma2 * x - u)
}

/// One Euler–Maruyama step without boundary handling.
pub fn em_step_raw(state: &State, u: Control, model: &ModelParams, dt: f64, noise: f64) -> f64 {
    state.x + drift(state, u, model) * dt + diffusion(state, model) * dt.sqrt() * noise
}

/// One Euler–Maruyama step, clamped to `x ≥ 0`.
pub fn em_step(state: &State, u: Control, model: &ModelParams, dt: f64, noise: f64) -> f64 {
    em_step_raw(state, u, model, dt, noise).max(0.0)
}

/// Number of steps covering `horizon`, or an error if it is not a multiple of `dt`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must be nonnegative"
        )));
    }
    let ratio = horizon / dt;
    let n = ratio.round();
    if (ratio - n).abs() > STEP_ROUNDING_TOL {
        return Err(Error::StepMismatch { horizon, dt });
    }
    Ok(n as usize)
}

/// Where a simulated trajectory ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkEnd {
    pub x: f64,
    pub clamp_count: usize,
    /// Whether the final state came from the clamp.
    pub clamped: bool,
}

/// Left-endpoint view of one step handed to [`walk_path`] callbacks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepView {
    pub k: usize,
    pub s: f64,
    pub x: f64,
    pub u: Control,
    /// Whether `x` was produced by the clamp on the previous step.
    pub clamped: bool,
}

/// Steps one trajectory from `start` for `n_steps`, calling `on_step` with
/// the left-endpoint state and control of every step before it is taken.
///
/// Noise for step `k` is keyed by `(seed, path_index, k)`.
#[allow(clippy::too_many_arguments)]
pub fn walk_path<P, F>(
    start: State,
    n_steps: usize,
    dt: f64,
    policy: &P,
    model: &ModelParams,
    seed: u64,
    path_index: u64,
    boundary: Boundary,
    mut on_step: F,
) -> Result<WalkEnd>
where
    P: Policy + ?Sized,
    F: FnMut(StepView) -> Result<()>,
{
    let mut noise = NoiseStream::new(seed, path_index);
    let sqrt_dt = dt.sqrt();
    let mut x = start.x;
    let mut clamped = false;
    let mut clamp_count = 0;
    for k in 0..n_steps {
        let s = start.s + k as f64 * dt;
        // Policies only ever see admissible states; a free path below zero
        // is shown the boundary.
        let u = policy.control(&State { s, x: x.max(0.0) });
        on_step(StepView {
            k,
            s,
            x,
            u,
            clamped,
        })?;
        let z = noise.next_normal();
        let next = x
            + drift_unchecked(x, u.value(), model)? * dt
            + (model.sigma1 - model.sigma2 * x) * sqrt_dt * z;
        clamped = boundary == Boundary::Absorb && next < 0.0;
        if clamped {
            clamp_count += 1;
            x = 0.0;
        } else {
            x = next;
        }
    }
    Ok(WalkEnd {
        x,
        clamp_count,
        clamped,
    })
}

/// A discretised trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub seed: u64,
    pub path_index: u64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// `clamped[k]` is true when `states[k]` was produced by the boundary clamp.
    pub clamped: Vec<bool>,
}

impl Path {
    pub fn clamp_count(&self) -> usize {
        self.clamped.iter().filter(|c| **c).count()
    }

    pub fn final_state(&self) -> f64 {
        *self.states.last().expect("path has at least one state")
    }

    /// Rows `path_id,step,s,x,clamped` (no header).
    pub fn write_csv_rows<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (k, ((s, x), c)) in self
            .times
            .iter()
            .zip(&self.states)
            .zip(&self.clamped)
            .enumerate()
        {
            writeln!(
                w,
                "{},{},{},{},{}",
                self.path_index,
                k,
                decimal(*s),
                decimal(*x),
                u8::from(*c)
            )?;
        }
        Ok(())
    }
}

pub const PATH_CSV_HEADER: &str = "path_id,step,s,x,clamped";

/// Writes the header and every path's rows.
pub fn write_paths_csv<W: Write>(paths: &[Path], w: &mut W) -> io::Result<()> {
    writeln!(w, "{PATH_CSV_HEADER}")?;
    for p in paths {
        p.write_csv_rows(w)?;
    }
    Ok(())
}

/// Simulates path 0 of `seed` from `x(0) = x0` with absorbing boundary.
pub fn simulate_path<P: Policy + ?Sized>(
    x0: f64,
    policy: &P,
    model: &ModelParams,
    dt: f64,
    horizon: f64,
    seed: u64,
) -> Result<Path> {
    simulate_path_indexed(x0, policy, model, dt, horizon, seed, 0, Boundary::Absorb)
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_path_indexed<P: Policy + ?Sized>(
    x0: f64,
    policy: &P,
    model: &ModelParams,
    dt: f64,
    horizon: f64,
    seed: u64,
    path_index: u64,
    boundary: Boundary,
) -> Result<Path> {
    let start = State::new(0.0, x0)?;
    let n = step_count(horizon, dt)?;
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut clamped = Vec::with_capacity(n + 1);
    let end = walk_path(
        start,
        n,
        dt,
        policy,
        model,
        seed,
        path_index,
        boundary,
        |v| {
            times.push(v.s);
            states.push(v.x);
            clamped.push(v.clamped);
            Ok(())
        },
    )?;
    times.push(n as f64 * dt);
    states.push(end.x);
    clamped.push(end.clamped);
    Ok(Path {
        seed,
        path_index,
        dt,
        times,
        states,
        clamped,
    })
}

/// `n_paths` independent paths, simulated concurrently and returned in
/// path-index order.
#[allow(clippy::too_many_arguments)]
pub fn simulate_batch<P: Policy + ?Sized>(
    x0: f64,
    policy: &P,
    model: &ModelParams,
    dt: f64,
    horizon: f64,
    seed: u64,
    n_paths: usize,
    boundary: Boundary,
) -> Result<Vec<Path>> {
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_path_indexed(x0, policy, model, dt, horizon, seed, i, boundary))
        .collect()
}

/// Final states of `n_paths` paths without storing the trajectories.
#[allow(clippy::too_many_arguments)]
pub fn terminal_states<P: Policy + ?Sized>(
    x0: f64,
    policy: &P,
    model: &ModelParams,
    dt: f64,
    horizon: f64,
    seed: u64,
    n_paths: usize,
    boundary: Boundary,
) -> Result<Vec<WalkEnd>> {
    let start = State::new(0.0, x0)?;
    let n = step_count(horizon, dt)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| walk_path(start, n, dt, policy, model, seed, i, boundary, |_| Ok(())))
        .collect()
}

/// Log of the Gaussian density `N(x + μ·dt, σ²·dt)` of the unclamped step.
pub fn em_transition_logdensity(
    x_next: f64,
    state: &State,
    u: Control,
    model: &ModelParams,
    dt: f64,
) -> Result<f64> {
    let sigma = diffusion(state, model);
    if sigma == 0.0 {
        return Err(Error::DegenerateDensity);
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    let mean = state.x + drift(state, u, model) * dt;
    let var = sigma * sigma * dt;
    let dev = x_next - mean;
    Ok(-0.5 * (std::f64::consts::TAU * var).ln() - dev * dev / (2.0 * var))
}

/// Sum of the one-step log-densities along `path`.
pub fn path_logdensity<P: Policy + ?Sized>(
    path: &Path,
    policy: &P,
    model: &ModelParams,
) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..path.states.len().saturating_sub(1) {
        if path.clamped[k + 1] || path.states[k] <= 0.0 {
            return Err(Error::ClampedStep { step: k + 1 });
        }
        let state = State::new(path.times[k], path.states[k])?;
        let u = policy.control(&state);
        total += em_transition_logdensity(path.states[k + 1], &state, u, model, path.dt)?;
    }
    Ok(total)
}

/// Density of `x` after `n_steps` Euler–Maruyama steps from `x0`, obtained by
/// integrating the product of exact one-step densities over every
/// intermediate state with the trapezoid rule on `grid`.
///
/// Mass leaving `grid` (or reaching `x ≤ 0`) is lost; the grid must cover
/// the bulk of the distribution.
pub fn em_marginal_density<P: Policy + ?Sized>(
    x0: f64,
    policy: &P,
    model: &ModelParams,
    dt: f64,
    n_steps: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let start = State::new(0.0, x0)?;
    let u0 = policy.control(&start);
    let mut density = grid
        .iter()
        .map(|&y| em_transition_logdensity(y, &start, u0, model, dt).map(f64::exp))
        .collect::<Result<Vec<_>>>()?;
    for k in 1..n_steps {
        let s = k as f64 * dt;
        // kernel[j][i] = p(grid[i] | grid[j]) over admissible source points
        let sources: Vec<(f64, State, Control)> = grid
            .iter()
            .zip(&density)
            .filter(|(x, _)| **x > 0.0)
            .map(|(&x, &p)| {
                let st = State { s, x };
                (p, st, policy.control(&st))
            })
            .collect();
        let xs: Vec<f64> = sources.iter().map(|(_, st, _)| st.x).collect();
        density = grid
            .par_iter()
            .map(|&y| {
                let integrand = sources
                    .iter()
                    .map(|(p, st, u)| {
                        em_transition_logdensity(y, st, *u, model, dt).map(|l| p * l.exp())
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(trapezoid(&xs, &integrand))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(density)
}
