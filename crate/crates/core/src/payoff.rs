//! Instantaneous payoff, terminal bonus and the Monte Carlo expected payoff
//! `J(u) = E[∫₀ᵗ e^{−rs}·π ds + M(x(t))]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{step_count, walk_path, Boundary, ConstantPolicy, Policy};
use crate::error::{Error, Result};
use crate::model::{Control, ModelParams, PayoffParams, State};
use crate::stats::mean_and_stderr;

/// `π = (θ + Σα)·x − c·u²/((r − μ̄)·√x)`.
///
/// At `x = 0` the cost is taken as 0 when `u = 0` and is singular otherwise.
pub fn instantaneous_payoff(state: &State, u: Control, payoff: &PayoffParams) -> Result<f64> {
    let u = u.value();
    let gain = payoff.skill() * state.x;
    if u == 0.0 {
        return Ok(gain);
    }
    if state.x == 0.0 {
        return Err(Error::CostSingular);
    }
    Ok(gain - payoff.c * u * u / (payoff.discount_gap() * state.x.sqrt()))
}

/// `M(x(t)) = ω·e^{−rt}·√x(t)`.
pub fn terminal_bonus(x_final: f64, payoff: &PayoffParams) -> f64 {
    payoff.omega * (-payoff.r * payoff.horizon).exp() * x_final.max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Paths that contributed to `mean`.
    pub n_valid: usize,
    /// Share of paths with at least one clamped step.
    pub clamp_fraction: f64,
    /// Share of paths discarded because the cost became singular at `x = 0`.
    pub invalid_fraction: f64,
}

struct PathOutcome {
    value: Option<f64>,
    clamped: bool,
}

/// Monte Carlo `J` for a feedback policy started at `x(0) = x0`.
#[allow(clippy::too_many_arguments)]
pub fn expected_payoff<P: Policy + ?Sized>(
    x0: f64,
    policy: &P,
    model: &ModelParams,
    payoff: &PayoffParams,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PayoffEstimate> {
    expected_payoff_from(
        State::new(0.0, x0)?,
        policy,
        model,
        payoff,
        dt,
        n_paths,
        seed,
    )
}

/// Monte Carlo payoff-to-go from `start` until the horizon. Discounting uses
/// absolute time, so `start.s = 0` gives `J`.
///
/// The running payoff is a left-endpoint Riemann sum on the simulation grid.
#[allow(clippy::too_many_arguments)]
pub fn expected_payoff_from<P: Policy + ?Sized>(
    start: State,
    policy: &P,
    model: &ModelParams,
    payoff: &PayoffParams,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<PayoffEstimate> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be at least 1".into()));
    }
    let start = start.within(payoff.horizon)?;
    let n_steps = step_count(payoff.horizon - start.s, dt)?;

    let outcomes = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut running = 0.0;
            let walked = walk_path(
                start,
                n_steps,
                dt,
                policy,
                model,
                seed,
                i,
                Boundary::Absorb,
                |v| {
                    let pi = instantaneous_payoff(&State { s: v.s, x: v.x }, v.u, payoff)?;
                    running += (-payoff.r * v.s).exp() * pi * dt;
                    Ok(())
                },
            );
            match walked {
                Ok(end) => Ok(PathOutcome {
                    value: Some(running + terminal_bonus(end.x, payoff)),
                    clamped: end.clamp_count > 0,
                }),
                Err(Error::CostSingular) => Ok(PathOutcome {
                    value: None,
                    clamped: true,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let values: Vec<f64> = outcomes.iter().filter_map(|o| o.value).collect();
    if values.is_empty() {
        return Err(Error::CostSingular);
    }
    let clamped = outcomes.iter().filter(|o| o.clamped).count();
    let (mean, std_error) = mean_and_stderr(&values);
    Ok(PayoffEstimate {
        mean,
        std_error,
        n_paths,
        n_valid: values.len(),
        clamp_fraction: clamped as f64 / n_paths as f64,
        invalid_fraction: (n_paths - values.len()) as f64 / n_paths as f64,
    })
}

/// Central finite-difference estimates of `dJ/du` and `d²J/du²` for
/// constant-in-time controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stationarity {
    pub first: f64,
    pub second: f64,
    pub j_minus: f64,
    pub j_center: f64,
    pub j_plus: f64,
}

/// Evaluates `J` at `u − h`, `u`, `u + h` with common random numbers.
#[allow(clippy::too_many_arguments)]
pub fn payoff_stationarity(
    x0: f64,
    u_center: f64,
    h_u: f64,
    model: &ModelParams,
    payoff: &PayoffParams,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Stationarity> {
    if !(h_u > 0.0) || u_center - h_u < 0.0 || u_center + h_u > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "stencil {u_center} ± {h_u} leaves [0, 1]"
        )));
    }
    let j = |u: f64| {
        expected_payoff(
            x0,
            &ConstantPolicy::new(u),
            model,
            payoff,
            dt,
            n_paths,
            seed,
        )
        .map(|e| e.mean)
    };
    let (j_minus, j_center, j_plus) = (j(u_center - h_u)?, j(u_center)?, j(u_center + h_u)?);
    Ok(Stationarity {
        first: (j_plus - j_minus) / (2.0 * h_u),
        second: (j_plus - 2.0 * j_center + j_minus) / (h_u * h_u),
        j_minus,
        j_center,
        j_plus,
    })
}
