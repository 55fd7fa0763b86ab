//! Invariant suites run by the `validate` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use stubborn_core::control::{
    closed_form_coeffs, nash_residual, optimal_stubbornness, root_scan_fn, solve_quartic,
    SelectionConfig,
};
use stubborn_core::density::{
    evolve, gaussian_integral_closed, DensityGrid, KernelOptions, PolicyField, Stepper,
};
use stubborn_core::dynamics::{terminal_states, Boundary, ConstantPolicy};
use stubborn_core::error::Result;
use stubborn_core::feynman_kac::{fk_estimate, FkProblem};
use stubborn_core::lagrangian::{
    derivatives, fd_estimates, fd_rel_error, finite_difference_check, paper_discrepancy,
};
use stubborn_core::payoff::{expected_payoff, payoff_stationarity};
use stubborn_core::quadrature::integrate;
use stubborn_core::stats::mean_and_stderr;
use stubborn_core::{
    ClosedFormMode, DerivativeMode, LagrangeParams, ModeFlags, ModelParams, NashMode, PayoffParams,
    Problem, State,
};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub passed: bool,
    pub cases: usize,
    pub failures: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub details: Value,
}

impl SuiteReport {
    fn errored(name: &str, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.to_string(),
            passed: false,
            cases: 0,
            failures: 0,
            max_error: f64::NAN,
            tolerance: f64::NAN,
            details: json!({ "error": err.to_string() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

const FD_STEP: f64 = 1e-5;
const DISCREPANCY_TOL: f64 = 1e-6;
const SCAN_MATCH_TOL: f64 = 1e-3;
const SCAN_GRID: usize = 2000;

pub fn run_all(cfg: &RunConfig) -> ValidationReport {
    let seed = cfg.numerics.seed;
    let (scan, divergence) = match closed_form_suites(cfg, 50, seed) {
        Ok((a, b)) => (Ok(a), Ok(b)),
        Err(e) => (Err(e.clone()), Err(e)),
    };
    let suites: Vec<(&str, Result<SuiteReport>)> = vec![
        (
            "gaussian_identity",
            gaussian_identity(cfg.numerics.tolerances.quad_rel),
        ),
        ("finite_differences", finite_differences(cfg, 100, seed)),
        ("paper_discrepancy", paper_discrepancy_suite(cfg, 100, seed)),
        ("trivial_root", trivial_root(cfg, 100, seed)),
        ("closed_form_vs_scan", scan),
        ("paper_verbatim_divergence", divergence),
        ("fk_frozen_discount", fk_frozen_discount()),
        (
            "fk_stochastic",
            fk_stochastic(cfg.numerics.n_paths, cfg.numerics.dt, seed),
        ),
        ("moment_law", moment_law(cfg, seed)),
        ("density_equivalence", density_equivalence(cfg)),
        ("payoff_stationarity", payoff_stationarity_suite()),
    ];
    let suites: Vec<SuiteReport> = suites
        .into_iter()
        .map(|(name, r)| r.unwrap_or_else(|e| SuiteReport::errored(name, e)))
        .collect();
    ValidationReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    }
}

fn rng_for(seed: u64, suite: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite);
    rng
}

fn problem_of(cfg: &RunConfig) -> Problem {
    Problem::new(cfg.model, cfg.payoff, cfg.lagrange, cfg.numerics.x0)
}

fn summary(name: &str, errors: &[f64], tolerance: f64, details: Value) -> SuiteReport {
    let failures = errors.iter().filter(|e| !(**e <= tolerance)).count();
    SuiteReport {
        name: name.to_string(),
        passed: failures == 0 && !errors.is_empty(),
        cases: errors.len(),
        failures,
        max_error: errors.iter().copied().fold(0.0, f64::max),
        tolerance,
        details,
    }
}

/// Closed-form Gaussian integral against adaptive quadrature over
/// `q, ε, β ∈ {0.1, 1, 10} × {0.01, 0.1, 1} × {0.5, 1, 2}` and `λ ∈ {−2, 0, 2}`.
pub fn gaussian_identity(tolerance: f64) -> Result<SuiteReport> {
    let mut errors = Vec::new();
    for q in [0.1, 1.0, 10.0] {
        for lambda in [-2.0, 0.0, 2.0] {
            for eps in [0.01, 0.1, 1.0] {
                for beta in [0.5, 1.0, 2.0] {
                    let closed = gaussian_integral_closed(q, lambda, eps, beta)?;
                    let sd = (eps * beta / (2.0 * q)).sqrt();
                    let centre = lambda * eps * eps / (2.0 * q);
                    let g =
                        |xi: f64| (-q * xi * xi / (eps * beta) + lambda * eps * xi / beta).exp();
                    let num = integrate(g, centre - 50.0 * sd, centre + 50.0 * sd, 1e-13, 0.0);
                    errors.push((num - closed).abs() / closed);
                }
            }
        }
    }
    Ok(summary(
        "gaussian_identity",
        &errors,
        tolerance,
        Value::Null,
    ))
}

fn interior_sample(rng: &mut ChaCha8Rng, cfg: &RunConfig) -> (State, f64) {
    let lo = cfg.numerics.x_grid.min.max(0.1);
    let hi = cfg.numerics.x_grid.max.max(lo + 1.0);
    let s = rng.random_range(0.0..=cfg.payoff.horizon);
    let x = rng.random_range(lo..=hi);
    let u = rng.random_range(0.0..=1.0);
    (State { s, x }, u)
}

/// Calculus-exact partials against central differences; printed partials
/// are measured the same way and reported without a pass criterion.
pub fn finite_differences(cfg: &RunConfig, n: usize, seed: u64) -> Result<SuiteReport> {
    let problem = problem_of(cfg);
    let mut rng = rng_for(seed, 1);
    let mut errors = Vec::with_capacity(n);
    let names = ["f_x", "f_xx", "f_u", "f_xu"];
    let mut worst = [[0.0f64; 4]; 2];
    for _ in 0..n {
        let (state, u) = interior_sample(&mut rng, cfg);
        for (m, mode) in [DerivativeMode::Consistent, DerivativeMode::Paper]
            .into_iter()
            .enumerate()
        {
            let report = finite_difference_check(&state, u, &problem, mode, FD_STEP)?;
            for (k, c) in report.components.iter().enumerate() {
                worst[m][k] = worst[m][k].max(c.rel_error);
            }
            if mode == DerivativeMode::Consistent {
                errors.push(report.max_rel_error());
            }
        }
    }
    let per_mode = |m: usize| -> Value {
        names
            .iter()
            .zip(worst[m])
            .map(|(k, v)| (k.to_string(), json!(v)))
            .collect()
    };
    let details = json!({ "step": FD_STEP, "consistent": per_mode(0), "paper": per_mode(1) });
    Ok(summary(
        "finite_differences",
        &errors,
        cfg.numerics.tolerances.fd_rel,
        details,
    ))
}

/// `(printed − numeric)` against the analytic discrepancy of the printed partials.
pub fn paper_discrepancy_suite(cfg: &RunConfig, n: usize, seed: u64) -> Result<SuiteReport> {
    let problem = problem_of(cfg);
    let mut rng = rng_for(seed, 2);
    let mut errors = Vec::with_capacity(n);
    for _ in 0..n {
        let (state, u) = interior_sample(&mut rng, cfg);
        let paper = derivatives(&state, u, &problem, DerivativeMode::Paper)?;
        let fd = fd_estimates(&state, u, &problem, FD_STEP)?;
        let gap = paper_discrepancy(&state, u, &problem)?;
        let worst = [
            fd_rel_error(paper.f_x - fd.f_x, gap.f_x),
            fd_rel_error(paper.f_xx - fd.f_xx, gap.f_xx),
            fd_rel_error(paper.f_xu - fd.f_xu, gap.f_xu),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        errors.push(worst);
    }
    Ok(summary(
        "paper_discrepancy",
        &errors,
        DISCREPANCY_TOL,
        Value::Null,
    ))
}

fn residual_modes() -> Vec<ModeFlags> {
    let mut out = Vec::new();
    for derivative_mode in [DerivativeMode::Paper, DerivativeMode::Consistent] {
        for nash_mode in [NashMode::Paper, NashMode::Rederived] {
            out.push(ModeFlags {
                derivative_mode,
                nash_mode,
                ..ModeFlags::default()
            });
        }
    }
    out
}

/// `u = 0` solves the optimality condition exactly when `ℓ₀ = 0`.
pub fn trivial_root(cfg: &RunConfig, n: usize, seed: u64) -> Result<SuiteReport> {
    let mut problem = problem_of(cfg);
    problem.lagrange.l0 = 0.0;
    let mut rng = rng_for(seed, 3);
    let mut errors = Vec::with_capacity(n * 4);
    for _ in 0..n {
        let (state, _) = interior_sample(&mut rng, cfg);
        for flags in residual_modes() {
            errors.push(nash_residual(&state, 0.0, &problem, flags)?.abs());
        }
    }
    Ok(summary("trivial_root", &errors, 0.0, json!({ "modes": 4 })))
}

/// A randomized scenario at the match start with `ℓ₀ = 0`.
pub fn random_scenario(rng: &mut ChaCha8Rng) -> (Problem, State) {
    let r = rng.random_range(0.1..1.0);
    let gap = rng.random_range(0.05..1.0);
    let problem = Problem {
        model: ModelParams {
            a: rng.random_range(0.0..1.5),
            sigma1: rng.random_range(0.0..0.6),
            sigma2: rng.random_range(0.0..0.6),
        },
        payoff: PayoffParams {
            theta: rng.random_range(0.1..2.0),
            alpha: [
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.3..0.3),
            ],
            c: rng.random_range(0.05..3.0),
            r,
            mu_bar: r - gap,
            omega: 1.0,
            horizon: 1.0,
        },
        lagrange: LagrangeParams {
            l0: 0.0,
            l1: rng.random_range(-1.0..1.0),
        },
        mbar: 0.0,
    };
    let state = State {
        s: 0.0,
        x: rng.random_range(0.2..3.0),
    };
    (problem, state)
}

/// Flags under which the closed form solves the optimality condition.
pub fn printed_flags(closed_form_mode: ClosedFormMode) -> ModeFlags {
    ModeFlags {
        derivative_mode: DerivativeMode::Paper,
        nash_mode: NashMode::Paper,
        closed_form_mode,
        ..ModeFlags::default()
    }
}

/// `|P(z)| / (|a|z² + |b||z| + |c|)` for the expanded quadratic in `z = u²`.
pub fn polynomial_residual(problem: &Problem, state: &State, z: f64) -> Result<f64> {
    let k = closed_form_coeffs(state, &problem.model, &problem.payoff, &problem.lagrange)?;
    let (a, b, c) = k.expanded();
    let scale = a.abs() * z * z + b.abs() * z.abs() + c.abs();
    Ok(k.factored(z).abs() / scale)
}

/// Scenarios whose rederived closed form has a root strictly inside `(0, 1)`.
pub fn scenarios_with_interior_root(n: usize, seed: u64) -> Result<Vec<(Problem, State)>> {
    let mut rng = rng_for(seed, 4);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n && attempts < 100_000 {
        attempts += 1;
        let (problem, state) = random_scenario(&mut rng);
        let k = closed_form_coeffs(&state, &problem.model, &problem.payoff, &problem.lagrange)?;
        let interior = solve_quartic(&k, ClosedFormMode::Rederived)
            .into_iter()
            .any(|z| z > SCAN_MATCH_TOL * SCAN_MATCH_TOL && z < 1.0);
        if interior {
            out.push((problem, state));
        }
    }
    Ok(out)
}

fn closed_form_suites(cfg: &RunConfig, n: usize, seed: u64) -> Result<(SuiteReport, SuiteReport)> {
    let residual_tol = cfg.numerics.tolerances.residual_rel;
    let scenarios = scenarios_with_interior_root(n, seed)?;
    let selection = SelectionConfig {
        dt: 0.01,
        n_paths: 64,
        seed,
    };
    let mut match_errors = Vec::new();
    let mut certificates = Vec::new();
    let mut printed = Vec::new();
    let mut divergent = 0usize;
    for (problem, state) in &scenarios {
        let flags = printed_flags(ClosedFormMode::Rederived);
        let res = optimal_stubbornness(state, problem, flags, &selection)?;
        let scan = root_scan_fn(
            |u| nash_residual(state, u, problem, flags),
            1.0 / SCAN_GRID as f64,
            1.0,
            SCAN_GRID,
        )?;
        for &u in res
            .u_candidates
            .iter()
            .filter(|u| **u > SCAN_MATCH_TOL && **u < 1.0)
        {
            let nearest = scan
                .iter()
                .map(|r| (r.u - u).abs())
                .fold(f64::INFINITY, f64::min);
            match_errors.push(nearest);
            let eval = stubborn_core::control::nash_evaluate(state, u, problem, flags)?;
            certificates.push(eval.residual.abs() / eval.scale);
        }

        let k = closed_form_coeffs(state, &problem.model, &problem.payoff, &problem.lagrange)?;
        let z_printed = solve_quartic(&k, ClosedFormMode::PaperVerbatim);
        let residuals = z_printed
            .iter()
            .map(|&z| polynomial_residual(problem, state, z))
            .collect::<Result<Vec<f64>>>()?;
        let fails = residuals.is_empty() || residuals.iter().any(|r| !(*r <= residual_tol));
        divergent += usize::from(fails);
        printed.push(
            json!({ "x": state.x, "z": z_printed, "residuals": residuals, "fails_oracle": fails }),
        );
    }
    let max_cert = certificates.iter().copied().fold(0.0, f64::max);
    let mut errors = match_errors.clone();
    // Certificates are folded in on the match tolerance's scale.
    errors.extend(certificates.iter().map(|c| {
        if *c <= residual_tol {
            0.0
        } else {
            f64::INFINITY
        }
    }));
    let mut scan_report = summary(
        "closed_form_vs_scan",
        &errors,
        SCAN_MATCH_TOL,
        json!({
            "scenarios": scenarios.len(),
            "roots_compared": match_errors.len(),
            "max_scan_distance": match_errors.iter().copied().fold(0.0, f64::max),
            "max_certificate": max_cert,
            "certificate_tolerance": residual_tol,
        }),
    );
    scan_report.cases = match_errors.len();
    scan_report.max_error = match_errors.iter().copied().fold(0.0, f64::max);
    scan_report.passed &= scenarios.len() == n;

    let fraction = if scenarios.is_empty() {
        0.0
    } else {
        divergent as f64 / scenarios.len() as f64
    };
    let divergence = SuiteReport {
        name: "paper_verbatim_divergence".into(),
        passed: scenarios.len() == n && fraction >= 0.9,
        cases: scenarios.len(),
        failures: scenarios.len() - divergent,
        max_error: fraction,
        tolerance: 0.9,
        details: json!({ "divergent_fraction": fraction, "scenarios": printed }),
    };
    Ok((scan_report, divergence))
}

/// Constant discounting of a linear terminal value with frozen dynamics.
pub fn fk_frozen_discount() -> Result<SuiteReport> {
    let rate = 0.4;
    let model = ModelParams {
        a: 0.0,
        sigma1: 0.0,
        sigma2: 0.0,
    };
    let problem = FkProblem::new(model, Box::new(ConstantPolicy::new(0.0)), 1.0)
        .with_potential(move |_, _, _| rate)
        .with_terminal(|_, x| x);
    let mut errors = Vec::new();
    for (s, x) in [(0.0, 0.5), (0.0, 2.0), (0.25, 1.0), (0.5, 3.0)] {
        let e = fk_estimate(&problem, s, x, 0.01, 4, 0)?;
        let exact = x * (-rate * (1.0 - s)).exp();
        errors.push((e.mean - exact).abs() / exact);
    }
    Ok(summary("fk_frozen_discount", &errors, 1e-12, Value::Null))
}

/// Discounted Brownian motion with a linear terminal value; the error is
/// measured in standard errors.
pub fn fk_stochastic(n_paths: usize, dt: f64, seed: u64) -> Result<SuiteReport> {
    let rate = 0.4;
    let model = ModelParams {
        a: 0.0,
        sigma1: 0.3,
        sigma2: 0.0,
    };
    let problem = FkProblem::new(model, Box::new(ConstantPolicy::new(0.0)), 1.0)
        .with_potential(move |_, _, _| rate)
        .with_terminal(|_, x| x);
    let e = fk_estimate(&problem, 0.0, 2.0, dt, n_paths, seed)?;
    let exact = 2.0 * (-rate).exp();
    let z = (e.mean - exact).abs() / e.std_error;
    Ok(summary(
        "fk_stochastic",
        &[z],
        3.0,
        json!({ "estimate": e.mean, "std_error": e.std_error, "exact": exact, "n_paths": n_paths }),
    ))
}

/// `E[x_t] = x₀(1 − σ₂dt)^{t/dt}` for unclamped paths with `a = 0, u = 0`.
pub fn moment_law(cfg: &RunConfig, seed: u64) -> Result<SuiteReport> {
    let model = ModelParams {
        a: 0.0,
        ..cfg.model
    };
    let (x0, dt, t) = (cfg.numerics.x0, cfg.numerics.dt, cfg.payoff.horizon);
    let ends = terminal_states(
        x0,
        &ConstantPolicy::new(0.0),
        &model,
        dt,
        t,
        seed,
        cfg.numerics.n_paths,
        Boundary::Free,
    )?;
    let xs: Vec<f64> = ends.iter().map(|e| e.x).collect();
    let (mean, se) = mean_and_stderr(&xs);
    let steps = (t / dt).round() as i32;
    let exact = x0 * (1.0 - model.sigma2 * dt).powi(steps);
    let z = if se > 0.0 {
        (mean - exact).abs() / se
    } else if mean == exact {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(summary(
        "moment_law",
        &[z],
        3.0,
        json!({ "mean": mean, "std_error": se, "exact": exact }),
    ))
}

/// Kernel and pointwise steps agree without the gradient correction, and
/// every grid keeps unit mass.
pub fn density_equivalence(cfg: &RunConfig) -> Result<SuiteReport> {
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
        512,
        d.initial_mean.unwrap_or(cfg.numerics.x0),
        d.initial_sd,
        0.0,
    )?;
    let opts = KernelOptions {
        exponent_mode: cfg.modes.kernel_exponent_mode,
        gradient_correction: false,
        keep_gaussian_prefactor: false,
    };
    let kernel = evolve(
        initial.clone(),
        d.eps,
        d.n_steps,
        &field,
        opts,
        Stepper::Kernel,
    )?;
    let pointwise = evolve(
        initial,
        d.eps,
        d.n_steps,
        &field,
        opts,
        Stepper::Schrodinger,
    )?;
    let mut gap = 0.0f64;
    let mut mass_error = 0.0f64;
    for (k, p) in kernel.iter().zip(&pointwise) {
        for (a, b) in k.psi.iter().zip(&p.psi) {
            gap = gap.max((a - b).abs());
        }
        mass_error = mass_error
            .max((k.mass() - 1.0).abs())
            .max((p.mass() - 1.0).abs());
    }
    let mut report = summary(
        "density_equivalence",
        &[gap],
        1e-8,
        json!({ "grids": kernel.len(), "points": 512, "max_mass_error": mass_error, "mass_tolerance": 1e-9 }),
    );
    report.passed &= mass_error <= 1e-9;
    Ok(report)
}

/// Deterministic payoff with an interior maximizer: the grid argmax is a
/// stationary point with negative curvature.
pub fn payoff_stationarity_suite() -> Result<SuiteReport> {
    let model = ModelParams {
        a: 0.0,
        sigma1: 0.0,
        sigma2: 0.0,
    };
    let payoff = PayoffParams {
        theta: 0.1,
        alpha: [-0.5, 0.0, 0.0],
        c: 0.1,
        r: 0.5,
        mu_bar: 0.0,
        omega: 0.1,
        horizon: 1.0,
    };
    let (x0, dt) = (2.0, 0.01);
    let mut best = (0.0, f64::NEG_INFINITY);
    for i in 0..=1000 {
        let u = i as f64 / 1000.0;
        let j = expected_payoff(x0, &ConstantPolicy::new(u), &model, &payoff, dt, 1, 0)?.mean;
        if j > best.1 {
            best = (u, j);
        }
    }
    let interior = best.0 > 0.0 && best.0 < 1.0;
    let st = if interior {
        Some(payoff_stationarity(
            x0, best.0, 1e-3, &model, &payoff, dt, 1, 0,
        )?)
    } else {
        None
    };
    let slope = st.map_or(f64::INFINITY, |s| s.first.abs());
    let mut report = summary(
        "payoff_stationarity",
        &[slope],
        1e-3,
        json!({ "u_max": best.0, "j_max": best.1, "curvature": st.map(|s| s.second) }),
    );
    report.passed &= st.is_some_and(|s| s.second < 0.0);
    Ok(report)
}
