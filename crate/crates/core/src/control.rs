//! Feedback-Nash optimality condition and the closed-form optimal
//! stubbornness of the worked example.
//!
//! With `dλ = 0` the condition factors as `u·P(u²) = 0` where
//! `P(z) = k₁(k₂z + A₃)² − k₃z + k₄`. The root `u = 0` always exists; the
//! nontrivial candidates are `u = √z` for the nonnegative roots of `P`.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::ConstantPolicy;
use crate::error::{Error, Result};
use crate::lagrangian::derivatives;
use crate::model::{
    ClosedFormMode, Control, LagrangeParams, ModeFlags, ModelParams, NashMode, PayoffParams,
    Problem, State,
};
use crate::payoff::expected_payoff_from;

/// Smallest state at which the closed form is evaluated.
pub const X_MIN: f64 = 1e-6;

/// Residual of the optimality condition and the magnitude of its two sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashEvaluation {
    pub residual: f64,
    /// `|lhs| + |rhs|`, the natural scale for judging a residual.
    pub scale: f64,
}

/// Paper form `f_u·f_xx² − 2·f_x·f_xu`, rederived form `f_u·f_xx − f_x·f_xu`.
pub fn nash_evaluate(
    state: &State,
    u: f64,
    problem: &Problem,
    flags: ModeFlags,
) -> Result<NashEvaluation> {
    let d = derivatives(state, u, problem, flags.derivative_mode)?;
    let (lhs, rhs) = match flags.nash_mode {
        NashMode::Paper => (d.f_u * d.f_xx * d.f_xx, 2.0 * d.f_x * d.f_xu),
        NashMode::Rederived => (d.f_u * d.f_xx, d.f_x * d.f_xu),
    };
    Ok(NashEvaluation {
        residual: lhs - rhs,
        scale: lhs.abs() + rhs.abs(),
    })
}

pub fn nash_residual(state: &State, u: f64, problem: &Problem, flags: ModeFlags) -> Result<f64> {
    nash_evaluate(state, u, problem, flags).map(|e| e.residual)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl ClosedFormCoeffs {
    /// `k₁(k₂z + A₃)² − k₃z + k₄`.
    pub fn factored(&self, z: f64) -> f64 {
        let inner = self.k2 * z + self.a3;
        self.k1 * inner * inner - self.k3 * z + self.k4
    }

    /// Coefficients `(a, b, c)` of the exact expansion `a·z² + b·z + c`.
    pub fn expanded(&self) -> (f64, f64, f64) {
        (
            self.k1 * self.k2 * self.k2,
            2.0 * self.k1 * self.k2 * self.a3 - self.k3,
            self.k1 * self.a3 * self.a3 + self.k4,
        )
    }
}

/// `A₁…A₃` and `k₁…k₄` at `(s, x)`, as displayed in the worked example.
pub fn closed_form_coeffs(
    state: &State,
    model: &ModelParams,
    payoff: &PayoffParams,
    lagrange: &LagrangeParams,
) -> Result<ClosedFormCoeffs> {
    let x = state.x;
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "closed form needs x > 0, got {x}"
        )));
    }
    let gap = payoff.discount_gap();
    if !(gap > 0.0) {
        return Err(Error::InvalidParameter("r must exceed mu_bar".into()));
    }
    let (a, s1, s2) = (model.a, model.sigma1, model.sigma2);
    let (dl, dl_ds) = (lagrange.l0, lagrange.l1);
    let c = payoff.c;
    let disc = (-payoff.r * state.s).exp();
    let h = (s2 * x).exp();
    let sqrt_x = x.sqrt();
    let sigma = s1 - s2 * x;
    let drift_free = a * sqrt_x - s2 * x;
    let drift_slope = a / (2.0 * sqrt_x) - s2;

    let a1 = s2 * h * dl;
    let a2 = disc * payoff.skill()
        + s2 * h * (dl + dl_ds + drift_slope * dl + s2 * drift_free * dl)
        - sigma * s2.powi(3) * h
        + 0.5 * sigma * sigma * s2.powi(3) * h;
    let a3 = s2 * s2 * h * dl + s2 * s2 * dl_ds * h + s2 * s2 * h * drift_slope * dl
        - s2 * h * 3.0 * a / (4.0 * x.powf(2.5)) * dl
        + s2.powi(3) * h * drift_free * dl
        + s2 * s2 * h * a / (2.0 * sqrt_x) * dl
        - s2 * s2 * h * a / (4.0 * x.powf(1.5)) * dl
        + s2.powi(4) * h
        - sigma * s2.powi(5) * h
        + 0.5 * sigma * sigma * s2.powi(4) * h;

    Ok(ClosedFormCoeffs {
        a1,
        a2,
        a3,
        k1: -2.0 * c / (gap * sqrt_x),
        k2: 15.0 * c / (4.0 * gap * x.powf(2.5)),
        k3: c * c / (gap * gap * x.powi(3)),
        k4: 2.0 * a2 * c * (-3.0 * payoff.r * state.s).exp() / (gap * x.powf(1.5)),
    })
}

/// Real roots `z = u²`, ascending. An empty vector means no real root.
pub fn solve_quartic(coeffs: &ClosedFormCoeffs, mode: ClosedFormMode) -> Vec<f64> {
    let mut roots = match mode {
        ClosedFormMode::Rederived => {
            let (a, b, c) = coeffs.expanded();
            solve_quadratic(a, b, c)
        }
        ClosedFormMode::PaperVerbatim => paper_z_star(coeffs),
    };
    roots.sort_by(f64::total_cmp);
    roots.dedup();
    roots
}

/// Real roots of `a·z² + b·z + c`, with the cancellation-free form of the
/// quadratic formula and a linear fallback when `a = 0`.
pub fn solve_quadratic(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a == 0.0 {
        return if b == 0.0 { Vec::new() } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || !disc.is_finite() {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// `z* = ½[(k₃ − 2k₁k₂)/(k₁k₂) ± √((k₃ − 2k₁k₂)²/(k₁k₂)² − 4(k₁A₃² − k₄)/(k₁k₂))]`.
fn paper_z_star(k: &ClosedFormCoeffs) -> Vec<f64> {
    let lead = k.k1 * k.k2;
    if lead == 0.0 {
        return Vec::new();
    }
    let centre = (k.k3 - 2.0 * lead) / lead;
    let disc = centre * centre - 4.0 * (k.k1 * k.a3 * k.a3 - k.k4) / lead;
    if disc < 0.0 || !disc.is_finite() {
        return Vec::new();
    }
    let root = disc.sqrt();
    vec![0.5 * (centre - root), 0.5 * (centre + root)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStatus {
    /// A nonnegative root of the factored equation was selected.
    Nontrivial,
    /// No nonnegative root exists; `u = 0` is returned.
    TrivialRootOnly,
}

impl ControlStatus {
    pub fn reason(self) -> &'static str {
        match self {
            ControlStatus::Nontrivial => "nontrivial root",
            ControlStatus::TrivialRootOnly => "trivial root only",
        }
    }
}

/// Monte Carlo settings used to rank several nonnegative candidates by
/// payoff-to-go under a constant control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionConfig {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_paths: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimalControlResult {
    pub s: f64,
    pub x: f64,
    pub coeffs: ClosedFormCoeffs,
    pub z_roots: Vec<f64>,
    /// `√z` for every nonnegative `z`, ascending.
    pub u_candidates: Vec<f64>,
    /// Optimality residual at each candidate.
    pub candidate_residuals: Vec<f64>,
    /// Payoff-to-go of each candidate; empty unless a choice had to be made.
    pub candidate_payoffs: Vec<f64>,
    pub u_star: Control,
    pub u_unclamped: f64,
    /// Residual at the clamped `u_star`.
    pub residual: f64,
    pub residual_scale: f64,
    pub status: ControlStatus,
    pub modes: ModeFlags,
}

/// Closed-form optimal stubbornness at one state.
pub fn optimal_stubbornness(
    state: &State,
    problem: &Problem,
    flags: ModeFlags,
    selection: &SelectionConfig,
) -> Result<OptimalControlResult> {
    if state.x < X_MIN {
        return Err(Error::BelowDomain);
    }
    let coeffs = closed_form_coeffs(state, &problem.model, &problem.payoff, &problem.lagrange)?;
    let z_roots = solve_quartic(&coeffs, flags.closed_form_mode);
    let mut u_candidates: Vec<f64> = z_roots
        .iter()
        .filter(|z| **z >= 0.0)
        .map(|z| z.sqrt())
        .collect();
    u_candidates.dedup();
    let candidate_residuals = u_candidates
        .iter()
        .map(|&u| nash_residual(state, u, problem, flags))
        .collect::<Result<Vec<_>>>()?;

    let (u_unclamped, candidate_payoffs, status) = match u_candidates.len() {
        0 => (0.0, Vec::new(), ControlStatus::TrivialRootOnly),
        1 => (u_candidates[0], Vec::new(), ControlStatus::Nontrivial),
        _ => {
            let payoffs = u_candidates
                .iter()
                .map(|&u| payoff_to_go(state, u, problem, selection))
                .collect::<Result<Vec<_>>>()?;
            // Strict improvement only, so ties keep the smaller u.
            let mut best = 0;
            for (i, p) in payoffs.iter().enumerate().skip(1) {
                if *p > payoffs[best] {
                    best = i;
                }
            }
            (u_candidates[best], payoffs, ControlStatus::Nontrivial)
        }
    };

    let u_star = Control::clamped(u_unclamped);
    let at_star = nash_evaluate(state, u_star.value(), problem, flags)?;
    Ok(OptimalControlResult {
        s: state.s,
        x: state.x,
        coeffs,
        z_roots,
        u_candidates,
        candidate_residuals,
        candidate_payoffs,
        u_star,
        u_unclamped,
        residual: at_star.residual,
        residual_scale: at_star.scale,
        status,
        modes: flags,
    })
}

/// Expected payoff from `state` to the horizon under the constant control `u`.
/// Paths that hit the singular cost at `x = 0` are dropped; if all do, the
/// candidate scores `−∞`.
fn payoff_to_go(state: &State, u: f64, problem: &Problem, cfg: &SelectionConfig) -> Result<f64> {
    let remaining = problem.payoff.horizon - state.s;
    if remaining <= 0.0 {
        return Ok(0.0);
    }
    let n_steps = (remaining / cfg.dt).round().max(1.0);
    let dt = remaining / n_steps;
    match expected_payoff_from(
        *state,
        &ConstantPolicy::new(u),
        &problem.model,
        &problem.payoff,
        dt,
        cfg.n_paths,
        cfg.seed,
    ) {
        Ok(est) => Ok(est.mean),
        Err(Error::CostSingular) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// [`optimal_stubbornness`] over an `(s, x)` grid, row-major with `s` as
/// the slow index.
pub fn policy_table(
    s_grid: &[f64],
    x_grid: &[f64],
    problem: &Problem,
    flags: ModeFlags,
    selection: &SelectionConfig,
) -> Vec<Result<OptimalControlResult>> {
    let cells: Vec<(f64, f64)> = s_grid
        .iter()
        .flat_map(|&s| x_grid.iter().map(move |&x| (s, x)))
        .collect();
    cells
        .par_iter()
        .map(|&(s, x)| {
            let state = State::new(s, x)?;
            optimal_stubbornness(&state, problem, flags, selection)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRoot {
    pub u: f64,
    pub residual: f64,
}

/// Bisection stops once the bracket is at most this wide.
pub const BISECTION_TOL: f64 = 1e-10;

/// Sign-change roots of `g` on the grid `lo + (hi − lo)·i/(n − 1)`, each
/// refined by bisection. Grid points where `g` is exactly zero are roots.
pub fn root_scan_fn<G>(g: G, lo: f64, hi: f64, grid_n: usize) -> Result<Vec<ScanRoot>>
where
    G: Fn(f64) -> Result<f64>,
{
    if grid_n < 10 {
        return Err(Error::InvalidArgument(format!(
            "grid_n must be at least 10, got {grid_n}"
        )));
    }
    let grid: Vec<f64> = (0..grid_n)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_n - 1) as f64)
        .collect();
    let values = grid.iter().map(|&u| g(u)).collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    for i in 0..grid_n {
        if values[i] == 0.0 {
            roots.push(ScanRoot {
                u: grid[i],
                residual: 0.0,
            });
            continue;
        }
        if i + 1 < grid_n && values[i + 1] != 0.0 && values[i].signum() != values[i + 1].signum() {
            let (mut a, mut b, mut ga) = (grid[i], grid[i + 1], values[i]);
            while b - a > BISECTION_TOL {
                let m = 0.5 * (a + b);
                let gm = g(m)?;
                if gm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if gm.signum() == ga.signum() {
                    a = m;
                    ga = gm;
                } else {
                    b = m;
                }
            }
            let u = 0.5 * (a + b);
            roots.push(ScanRoot { u, residual: g(u)? });
        }
    }
    Ok(roots)
}

/// All roots of the optimality residual on `(0, 1]`. The grid starts at
/// `1/grid_n` so that the trivial root `u = 0` is excluded.
pub fn root_scan(
    state: &State,
    problem: &Problem,
    flags: ModeFlags,
    grid_n: usize,
) -> Result<Vec<ScanRoot>> {
    let lo = 1.0 / grid_n as f64;
    root_scan_fn(|u| nash_residual(state, u, problem, flags), lo, 1.0, grid_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DerivativeMode;

    fn problem(a: f64, s1: f64, s2: f64, c: f64, theta: f64) -> Problem {
        Problem {
            model: ModelParams {
                a,
                sigma1: s1,
                sigma2: s2,
            },
            payoff: PayoffParams {
                theta,
                alpha: [0.0; 3],
                c,
                r: 0.5,
                mu_bar: 0.0,
                omega: 1.0,
                horizon: 1.0,
            },
            lagrange: LagrangeParams::default(),
            mbar: 0.0,
        }
    }

    fn st(s: f64, x: f64) -> State {
        State::new(s, x).unwrap()
    }

    fn all_flags() -> Vec<ModeFlags> {
        let mut out = Vec::new();
        for d in [DerivativeMode::Paper, DerivativeMode::Consistent] {
            for n in [NashMode::Paper, NashMode::Rederived] {
                out.push(ModeFlags {
                    derivative_mode: d,
                    nash_mode: n,
                    ..Default::default()
                });
            }
        }
        out
    }

    #[test]
    fn trivial_root_in_every_mode() {
        let p = problem(0.7, 0.4, 0.3, 1.2, 0.8);
        for f in all_flags() {
            assert_eq!(nash_residual(&st(0.3, 1.4), 0.0, &p, f).unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_cost_gives_zero_residual() {
        let p = problem(0.7, 0.4, 0.3, 0.0, 0.8);
        for f in all_flags() {
            for i in 0..=10 {
                assert_eq!(
                    nash_residual(&st(0.3, 1.4), i as f64 / 10.0, &p, f).unwrap(),
                    0.0
                );
            }
        }
    }

    #[test]
    fn coefficient_examples() {
        let p = problem(0.3, 0.2, 0.0, 1.0, 1.3);
        let k = closed_form_coeffs(&st(0.0, 1.0), &p.model, &p.payoff, &p.lagrange).unwrap();
        assert_eq!(k.a2, 1.3);
        assert_eq!(k.a3, 0.0);
        assert_eq!(k.a1, 0.0);
        assert_eq!((k.k1, k.k2, k.k3), (-4.0, 7.5, 4.0));
        assert!((k.k4 - 4.0 * k.a2).abs() < 1e-15);

        // Zero diffusion at x = σ₁/σ₂.
        let p = problem(0.3, 0.4, 0.2, 1.0, 1.3);
        let k = closed_form_coeffs(&st(0.0, 2.0), &p.model, &p.payoff, &p.lagrange).unwrap();
        assert!((k.a3 - 0.2f64.powi(4) * 0.4f64.exp()).abs() < 1e-16);
    }

    #[test]
    fn coefficient_signs() {
        let p = problem(0.3, 0.2, 0.1, 0.7, 1.3);
        for x in [0.01, 0.5, 3.0] {
            let k = closed_form_coeffs(&st(0.2, x), &p.model, &p.payoff, &p.lagrange).unwrap();
            assert!(k.k1 < 0.0 && k.k2 > 0.0 && k.k3 > 0.0);
        }
    }

    #[test]
    fn coefficients_reject_bad_domain() {
        let mut p = problem(0.3, 0.2, 0.1, 0.7, 1.3);
        assert!(closed_form_coeffs(&st(0.0, 0.0), &p.model, &p.payoff, &p.lagrange).is_err());
        p.payoff.mu_bar = 0.5;
        assert!(closed_form_coeffs(&st(0.0, 1.0), &p.model, &p.payoff, &p.lagrange).is_err());
    }

    #[test]
    fn factored_roots_without_constant() {
        let k = ClosedFormCoeffs {
            a1: 0.0,
            a2: 0.0,
            a3: 0.0,
            k1: -4.0,
            k2: 7.5,
            k3: 4.0,
            k4: 0.0,
        };
        let roots = solve_quartic(&k, ClosedFormMode::Rederived);
        assert_eq!(roots.len(), 2);
        let nonzero = 4.0 / (-4.0 * 7.5 * 7.5);
        assert!((roots[0] - nonzero).abs() < 1e-15);
        assert_eq!(roots[1], 0.0);
    }

    #[test]
    fn rederived_roots_satisfy_factored_polynomial() {
        let k = ClosedFormCoeffs {
            a1: 0.0,
            a2: 0.3,
            a3: 0.7,
            k1: -2.0,
            k2: 3.0,
            k3: 1.5,
            k4: 5.0,
        };
        let roots = solve_quartic(&k, ClosedFormMode::Rederived);
        assert_eq!(roots.len(), 2);
        let (a, b, c) = k.expanded();
        let scale = a.abs().max(b.abs()).max(c.abs());
        for z in roots {
            assert!(k.factored(z).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn printed_root_misses_factored_polynomial() {
        let k = ClosedFormCoeffs {
            a1: 0.0,
            a2: 0.3,
            a3: 0.7,
            k1: -2.0,
            k2: 3.0,
            k3: 1.5,
            k4: 5.0,
        };
        let (a, b, c) = k.expanded();
        let scale = a.abs().max(b.abs()).max(c.abs());
        let roots = solve_quartic(&k, ClosedFormMode::PaperVerbatim);
        assert!(!roots.is_empty());
        assert!(roots.iter().all(|&z| k.factored(z).abs() > 1e-9 * scale));
    }

    #[test]
    fn quadratic_edge_cases() {
        assert!(solve_quadratic(0.0, 0.0, 1.0).is_empty());
        assert_eq!(solve_quadratic(0.0, 2.0, -1.0), vec![0.5]);
        assert!(solve_quadratic(1.0, 0.0, 1.0).is_empty());
        assert_eq!(solve_quadratic(1.0, 0.0, 0.0), vec![0.0]);
    }

    #[test]
    fn zero_cost_is_trivial_only() {
        let p = problem(0.3, 0.2, 0.1, 0.0, 1.3);
        let r = optimal_stubbornness(
            &st(0.0, 1.0),
            &p,
            ModeFlags::default(),
            &SelectionConfig::default(),
        )
        .unwrap();
        assert_eq!(r.status, ControlStatus::TrivialRootOnly);
        assert_eq!(r.u_star, Control::ZERO);
        assert_eq!(r.status.reason(), "trivial root only");
    }

    #[test]
    fn tiny_cost_clamps_to_one() {
        let p = problem(0.3, 0.2, 0.0, 1e-3, 1.3);
        let r = optimal_stubbornness(
            &st(0.0, 1.0),
            &p,
            ModeFlags::default(),
            &SelectionConfig::default(),
        )
        .unwrap();
        assert_eq!(r.status, ControlStatus::Nontrivial);
        assert!(r.u_unclamped > 1.0);
        assert_eq!(r.u_star.value(), 1.0);
        // The unclamped value is a genuine root of the residual.
        let scan = root_scan_fn(
            |u| nash_residual(&st(0.0, 1.0), u, &p, ModeFlags::default()),
            0.5,
            2.0 * r.u_unclamped,
            200,
        )
        .unwrap();
        assert!(scan.iter().any(|s| (s.u - r.u_unclamped).abs() < 1e-6));
    }

    #[test]
    fn below_domain() {
        let p = problem(0.3, 0.2, 0.1, 1.0, 1.3);
        let r = optimal_stubbornness(
            &st(0.0, 1e-7),
            &p,
            ModeFlags::default(),
            &SelectionConfig::default(),
        );
        assert_eq!(r.unwrap_err().to_string(), "state below closed-form domain");
    }

    #[test]
    fn hand_root_without_environmental_noise() {
        // σ₂ = 0, s = 0: A₃ = 0 and P(z) = k₁k₂²z² − k₃z + k₄.
        let (c, gap, x, skill): (f64, f64, f64, f64) = (0.5, 0.5, 1.5, 1.0);
        let p = problem(0.4, 0.3, 0.0, c, skill);
        let k1 = -2.0 * c / (gap * x.sqrt());
        let k2 = 15.0 * c / (4.0 * gap * x.powf(2.5));
        let k3 = c * c / (gap * gap * x.powi(3));
        let k4 = 2.0 * skill * c / (gap * x.powf(1.5));
        let a = k1 * k2 * k2;
        let z = (k3 - (k3 * k3 - 4.0 * a * k4).sqrt()) / (2.0 * a);
        let u = z.sqrt();
        assert!(u > 0.0 && u < 1.0, "{u}");
        let roots = root_scan(&st(0.0, x), &p, ModeFlags::default(), 100).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].u - u).abs() < 1e-8);
    }

    #[test]
    fn monotone_residual_has_no_roots() {
        let roots = root_scan_fn(|u| Ok(u + 1.0), 0.0, 1.0, 50).unwrap();
        assert!(roots.is_empty());
        assert!(root_scan_fn(Ok, 0.0, 1.0, 9).is_err());
    }

    #[test]
    fn scan_is_refinement_stable() {
        let g = |u: f64| Ok((u - 0.3) * (u - 0.71));
        let coarse = root_scan_fn(g, 0.0, 1.0, 10).unwrap();
        let fine = root_scan_fn(g, 0.0, 1.0, 1000).unwrap();
        assert_eq!(coarse.len(), 2);
        assert_eq!(fine.len(), 2);
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a.u - b.u).abs() <= 2.0 * BISECTION_TOL);
        }
    }

    #[test]
    fn policy_table_is_row_major() {
        let p = problem(0.3, 0.2, 0.0, 0.05, 1.0);
        let table = policy_table(
            &[0.0, 0.5],
            &[0.5, 1.0, 1e-8],
            &p,
            ModeFlags::default(),
            &SelectionConfig::default(),
        );
        assert_eq!(table.len(), 6);
        let r = table[4].as_ref().unwrap();
        assert_eq!((r.s, r.x), (0.5, 1.0));
        assert_eq!(table[5].as_ref().unwrap_err(), &Error::BelowDomain);
    }
}
