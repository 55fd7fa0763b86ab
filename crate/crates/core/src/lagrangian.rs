//! The stochastic Lagrangian `f(s, x, u)` of the worked example, built with
//! the integrating factor `h = e^{σ₂x}`, and its partial derivatives.
//!
//! Two derivative modes exist. [`DerivativeMode::Paper`] reproduces the
//! printed partials, which disagree with direct differentiation in the cost
//! terms of `f_x`, `f_xx`, `f_xu` and in several multiplier and diffusion
//! terms of `f_xx`. [`DerivativeMode::Consistent`] returns the exact partials
//! and is what the finite-difference harness certifies.

use serde::Serialize;

use crate::dynamics::{diffusion, drift};
use crate::error::{Error, Result};
use crate::model::{Control, DerivativeMode, Problem, State};

/// `h(s, x) = e^{σ₂x}` and its partials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratingFactor {
    pub h: f64,
    pub h_s: f64,
    pub h_x: f64,
    pub h_xx: f64,
}

pub fn integrating_factor(state: &State, model: &crate::model::ModelParams) -> IntegratingFactor {
    let h = (model.sigma2 * state.x).exp();
    IntegratingFactor {
        h,
        h_s: 0.0,
        h_x: model.sigma2 * h,
        h_xx: model.sigma2 * model.sigma2 * h,
    }
}

/// Shared subexpressions at one `(s, x, u)`.
struct Terms {
    /// `e^{−rs}`
    disc: f64,
    /// `e^{σ₂x}`
    h: f64,
    /// `θ + Σα`
    skill: f64,
    /// `r − μ̄`
    gap: f64,
    c: f64,
    a: f64,
    s2: f64,
    /// `dλ(s)`
    l0: f64,
    /// `dλ/ds`
    l1: f64,
    x: f64,
    sqrt_x: f64,
    u: f64,
    /// Drift `a√x − σ₂x − u`.
    mu: f64,
    /// Diffusion `σ₁ − σ₂x`.
    sigma: f64,
}

impl Terms {
    fn new(state: &State, u: f64, p: &Problem) -> Result<Self> {
        if !(state.x > 0.0) {
            return Err(if u != 0.0 {
                Error::CostSingular
            } else {
                Error::InvalidArgument(format!("Lagrangian needs x > 0, got {}", state.x))
            });
        }
        let m = &p.model;
        let x = state.x;
        let sqrt_x = x.sqrt();
        Ok(Self {
            disc: (-p.payoff.r * state.s).exp(),
            h: (m.sigma2 * x).exp(),
            skill: p.payoff.skill(),
            gap: p.payoff.discount_gap(),
            c: p.payoff.c,
            a: m.a,
            s2: m.sigma2,
            l0: p.lagrange.l0,
            l1: p.lagrange.l1,
            x,
            sqrt_x,
            u,
            // Raw u: the Lagrangian is a polynomial in u and is evaluated
            // off [0, 1] by finite-difference stencils.
            mu: m.a * sqrt_x - m.sigma2 * x - u,
            sigma: m.sigma1 - m.sigma2 * x,
        })
    }

    /// `c·u²/((r−μ̄)·x^{p})`
    fn cost(&self, power: f64) -> f64 {
        self.c * self.u * self.u / (self.gap * self.x.powf(power))
    }

    /// `c·u/((r−μ̄)·x^{p})`
    fn cost_u(&self, power: f64) -> f64 {
        self.c * self.u / (self.gap * self.x.powf(power))
    }

    /// `a/(2√x) − σ₂`, the x-derivative of the drift.
    fn mu_x(&self) -> f64 {
        self.a / (2.0 * self.sqrt_x) - self.s2
    }
}

/// Generator-assembled Lagrangian
/// `e^{−rs}π + M̄ + h·dλ + h_s·dλ + λ̇·h + h_x·μ·dλ + ½σ²·h_xx·(dλ or 1)`.
///
/// With `diffusion_scaled_by_dlambda = false` the last term is not
/// multiplied by `dλ`, which is the convention of the expanded example and
/// of [`hand_coded_f`].
pub fn assemble_f_from_generator(
    state: &State,
    u: f64,
    problem: &Problem,
    diffusion_scaled_by_dlambda: bool,
) -> Result<f64> {
    if !(state.x > 0.0) {
        return Err(if u != 0.0 {
            Error::CostSingular
        } else {
            Error::InvalidArgument(format!("Lagrangian needs x > 0, got {}", state.x))
        });
    }
    let p = &problem.payoff;
    let m = &problem.model;
    let dl = problem.lagrange.l0;
    let dl_ds = problem.lagrange.l1;
    let hf = integrating_factor(state, m);
    // π with the raw u, for the same reason as in `Terms`.
    let pi = p.skill() * state.x - p.c * u * u / (p.discount_gap() * state.x.sqrt());
    let mu = drift(state, Control::ZERO, m) - u;
    let sigma = diffusion(state, m);
    let diffusion_weight = if diffusion_scaled_by_dlambda { dl } else { 1.0 };
    Ok((-p.r * state.s).exp() * pi
        + problem.mbar
        + hf.h * dl
        + (hf.h_s * dl + dl_ds * hf.h)
        + hf.h_x * mu * dl
        + 0.5 * sigma * sigma * hf.h_xx * diffusion_weight)
}

/// The expanded Lagrangian of the worked example, term by term.
pub fn hand_coded_f(state: &State, u: f64, problem: &Problem) -> Result<f64> {
    let t = Terms::new(state, u, problem)?;
    Ok(t.disc * (t.skill * t.x - t.cost(0.5))
        + problem.mbar
        + t.h * t.l0
        + t.l1 * t.h
        + t.s2 * t.h * t.mu * t.l0
        + 0.5 * t.sigma * t.sigma * t.s2 * t.s2 * t.h)
}

/// `f` and its partials at one point, tagged with the mode that produced them.
///
/// `f_xxu` is not stored: the optimality conditions treat it as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativeBundle {
    pub f: f64,
    pub f_u: f64,
    pub f_x: f64,
    pub f_xx: f64,
    pub f_xu: f64,
    pub mode: DerivativeMode,
}

pub fn derivatives(
    state: &State,
    u: f64,
    problem: &Problem,
    mode: DerivativeMode,
) -> Result<DerivativeBundle> {
    let t = Terms::new(state, u, problem)?;
    let f = hand_coded_f(state, u, problem)?;
    let f_u = -t.disc * 2.0 * t.cost_u(0.5) - t.s2 * t.h * t.l0;

    // Multiplier and diffusion parts shared by both modes' f_x.
    let f_x_rest = t.s2 * t.h * (t.l0 + t.l1 + t.mu_x() * t.l0 + t.s2 * t.mu * t.l0)
        - t.sigma * t.s2.powi(3) * t.h
        + 0.5 * t.sigma * t.sigma * t.s2.powi(3) * t.h;

    let bundle = match mode {
        DerivativeMode::Paper => {
            let f_x = t.disc * (t.skill - t.cost(1.5) / 2.0) + f_x_rest;
            let f_xx = t.disc * 15.0 * t.cost(2.5) / 4.0
                + t.s2.powi(2) * t.h * t.l0
                + t.s2.powi(2) * t.l1 * t.h
                + t.s2.powi(2) * t.h * t.mu_x() * t.l0
                - t.s2 * t.h * 3.0 * t.a / (4.0 * t.x.powf(2.5)) * t.l0
                + t.s2.powi(3) * t.h * t.mu * t.l0
                + t.s2.powi(2) * t.h * t.a / (2.0 * t.sqrt_x) * t.l0
                - t.s2.powi(2) * t.h * t.a / (4.0 * t.x.powf(1.5)) * t.l0
                + t.s2.powi(4) * t.h
                - t.sigma * t.s2.powi(5) * t.h
                + 0.5 * t.sigma * t.sigma * t.s2.powi(4) * t.h;
            let f_xu = -t.c * t.disc * t.u / (t.gap * t.x.powf(1.5));
            DerivativeBundle {
                f,
                f_u,
                f_x,
                f_xx,
                f_xu,
                mode,
            }
        }
        DerivativeMode::Consistent => {
            let f_x = t.disc * (t.skill + t.cost(1.5) / 2.0) + f_x_rest;
            let f_xx = -t.disc * 3.0 * t.cost(2.5) / 4.0
                + t.s2.powi(2) * t.h * (t.l0 + t.l1)
                + 2.0 * t.s2.powi(2) * t.h * t.mu_x() * t.l0
                - t.s2 * t.h * t.a / (4.0 * t.x.powf(1.5)) * t.l0
                + t.s2.powi(3) * t.h * t.mu * t.l0
                + t.s2.powi(4) * t.h
                - 2.0 * t.sigma * t.s2.powi(4) * t.h
                + 0.5 * t.sigma * t.sigma * t.s2.powi(4) * t.h;
            let f_xu = t.disc * t.cost_u(1.5) - t.s2.powi(2) * t.h * t.l0;
            DerivativeBundle {
                f,
                f_u,
                f_x,
                f_xx,
                f_xu,
                mode,
            }
        }
    };
    Ok(bundle)
}

/// Exact `∂³f/∂x²∂u`. Nonzero whenever `u ≠ 0` or `dλ ≠ 0`.
pub fn consistent_f_xxu(state: &State, u: f64, problem: &Problem) -> Result<f64> {
    let t = Terms::new(state, u, problem)?;
    Ok(-t.disc * 1.5 * t.cost_u(2.5) - t.s2.powi(3) * t.h * t.l0)
}

/// Printed-minus-exact differences of the partials that disagree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaperDiscrepancy {
    pub f_x: f64,
    pub f_xx: f64,
    pub f_xu: f64,
}

/// Closed-form `paper − consistent` for `f_x`, `f_xx` and `f_xu`.
pub fn paper_discrepancy(state: &State, u: f64, problem: &Problem) -> Result<PaperDiscrepancy> {
    let t = Terms::new(state, u, problem)?;
    let (s2, h, l0, a, x) = (t.s2, t.h, t.l0, t.a, t.x);
    let f_x = -t.disc * t.cost(1.5);
    let f_xx = t.disc * 4.5 * t.cost(2.5) + s2.powi(3) * h * l0
        - s2 * h * 3.0 * a / (4.0 * x.powf(2.5)) * l0
        - s2 * s2 * h * a / (4.0 * x.powf(1.5)) * l0
        + s2 * h * a / (4.0 * x.powf(1.5)) * l0
        + t.sigma * s2.powi(4) * h * (2.0 - s2);
    let f_xu = -2.0 * t.disc * t.cost_u(1.5) + s2 * s2 * h * l0;
    Ok(PaperDiscrepancy { f_x, f_xx, f_xu })
}

/// One compared partial derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdComponent {
    pub name: &'static str,
    pub analytic: f64,
    pub numeric: f64,
    /// `|numeric − analytic| / max(|analytic|, 1)`.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub s: f64,
    pub x: f64,
    pub u: f64,
    pub mode: DerivativeMode,
    pub step: f64,
    pub components: Vec<FdComponent>,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn component(&self, name: &str) -> Option<&FdComponent> {
        self.components.iter().find(|c| c.name == name)
    }
}

/// Error measure used by [`finite_difference_check`].
pub fn fd_rel_error(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / analytic.abs().max(1.0)
}

/// Central finite differences of `f` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdEstimates {
    pub f_x: f64,
    pub f_xx: f64,
    pub f_u: f64,
    pub f_xu: f64,
}

/// Step sizes: `step` for `f_x`; `√step` for the u-direction (f is
/// quadratic in u); `√step·x/10` for the second-order x-stencils.
pub fn fd_estimates(state: &State, u: f64, problem: &Problem, step: f64) -> Result<FdEstimates> {
    let x = state.x;
    let h2 = step.sqrt() * x * 0.1;
    let k = step.sqrt();
    if !(step > 0.0) || x - step <= 0.0 || x - h2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "step {step} does not fit at x = {x}"
        )));
    }
    let f = |dx: f64, du: f64| {
        hand_coded_f(
            &State {
                s: state.s,
                x: x + dx,
            },
            u + du,
            problem,
        )
    };
    let f0 = f(0.0, 0.0)?;
    Ok(FdEstimates {
        f_x: (f(step, 0.0)? - f(-step, 0.0)?) / (2.0 * step),
        f_xx: (f(h2, 0.0)? - 2.0 * f0 + f(-h2, 0.0)?) / (h2 * h2),
        f_u: (f(0.0, k)? - f(0.0, -k)?) / (2.0 * k),
        f_xu: (f(h2, k)? - f(h2, -k)? - f(-h2, k)? + f(-h2, -k)?) / (4.0 * h2 * k),
    })
}

/// Compares [`derivatives`] in `mode` against central differences of
/// [`hand_coded_f`].
pub fn finite_difference_check(
    state: &State,
    u: f64,
    problem: &Problem,
    mode: DerivativeMode,
    step: f64,
) -> Result<FdReport> {
    let b = derivatives(state, u, problem, mode)?;
    let fd = fd_estimates(state, u, problem, step)?;
    let comp = |name, analytic: f64, numeric: f64| FdComponent {
        name,
        analytic,
        numeric,
        rel_error: fd_rel_error(numeric, analytic),
    };
    Ok(FdReport {
        s: state.s,
        x: state.x,
        u,
        mode,
        step,
        components: vec![
            comp("f_x", b.f_x, fd.f_x),
            comp("f_xx", b.f_xx, fd.f_xx),
            comp("f_u", b.f_u, fd.f_u),
            comp("f_xu", b.f_xu, fd.f_xu),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LagrangeParams, ModelParams, PayoffParams};

    fn problem(a: f64, s1: f64, s2: f64, l0: f64, l1: f64) -> Problem {
        Problem {
            model: ModelParams {
                a,
                sigma1: s1,
                sigma2: s2,
            },
            payoff: PayoffParams {
                theta: 1.0,
                alpha: [0.0; 3],
                c: 1.0,
                r: 1.0,
                mu_bar: 0.0,
                omega: 1.0,
                horizon: 1.0,
            },
            lagrange: LagrangeParams { l0, l1 },
            mbar: 0.0,
        }
    }

    fn st(s: f64, x: f64) -> State {
        State::new(s, x).unwrap()
    }

    #[test]
    fn integrating_factor_examples() {
        let m = |s2| ModelParams {
            a: 0.0,
            sigma1: 0.0,
            sigma2: s2,
        };
        assert_eq!(integrating_factor(&st(0.0, 0.0), &m(3.0)).h, 1.0);
        let hf = integrating_factor(&st(0.0, 2.0), &m(0.5));
        let e = std::f64::consts::E;
        assert!((hf.h - e).abs() < 1e-15);
        assert!((hf.h_x - 0.5 * e).abs() < 1e-15);
        assert!((hf.h_xx - 0.25 * e).abs() < 1e-15);
        assert_eq!(hf.h_s, 0.0);
        let hf = integrating_factor(&st(0.0, 2.0), &m(0.0));
        assert_eq!((hf.h, hf.h_x, hf.h_xx), (1.0, 0.0, 0.0));
    }

    #[test]
    fn generator_examples() {
        let p = problem(0.7, 0.4, 0.3, 0.0, 0.0);
        let s = st(0.2, 1.3);
        let pi = 1.3 - 0.25 / 1.3f64.sqrt();
        let f = assemble_f_from_generator(&s, 0.5, &p, true).unwrap();
        assert!((f - (-0.2f64).exp() * pi).abs() < 1e-14);

        let p = problem(0.7, 0.0, 0.0, 1.0, 0.0).with_mbar(0.4);
        let f = assemble_f_from_generator(&s, 0.5, &p, false).unwrap();
        assert!((f - ((-0.2f64).exp() * pi + 0.4 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn hand_coded_examples() {
        let p = problem(0.7, 1.0, 0.0, 0.0, 0.0);
        let v = hand_coded_f(&st(0.3, 2.0), 0.4, &p).unwrap();
        let pi = 2.0 - 0.16 / 2f64.sqrt();
        assert!((v - (-0.3f64).exp() * pi).abs() < 1e-14);

        let p = problem(0.0, 1.0, 1.0, 0.0, 0.0);
        assert!((hand_coded_f(&st(0.0, 1.0), 0.0, &p).unwrap() - 1.0).abs() < 1e-15);
        let p = problem(0.0, 2.0, 1.0, 0.0, 0.0);
        let e = std::f64::consts::E;
        assert!((hand_coded_f(&st(0.0, 1.0), 0.0, &p).unwrap() - (1.0 + e / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn singular_at_zero() {
        let p = problem(0.5, 0.3, 0.1, 0.0, 0.0);
        assert_eq!(
            hand_coded_f(&st(0.0, 0.0), 0.3, &p),
            Err(Error::CostSingular)
        );
        assert_eq!(
            derivatives(&st(0.0, 0.0), 0.3, &p, DerivativeMode::Paper),
            Err(Error::CostSingular)
        );
    }

    #[test]
    fn u_zero_kills_control_partials() {
        let p = problem(0.5, 0.3, 0.4, 0.0, 0.7);
        for mode in [DerivativeMode::Paper, DerivativeMode::Consistent] {
            let b = derivatives(&st(0.1, 0.9), 0.0, &p, mode).unwrap();
            assert_eq!(b.f_u, 0.0);
            assert_eq!(b.f_xu, 0.0);
            assert_eq!(b.mode, mode);
        }
    }

    #[test]
    fn modes_agree_at_u_zero_except_printed_diffusion_term() {
        let p = problem(0.5, 0.3, 0.4, 0.0, 0.7);
        let s = st(0.1, 0.9);
        let pb = derivatives(&s, 0.0, &p, DerivativeMode::Paper).unwrap();
        let cb = derivatives(&s, 0.0, &p, DerivativeMode::Consistent).unwrap();
        assert_eq!(
            (pb.f, pb.f_u, pb.f_x, pb.f_xu),
            (cb.f, cb.f_u, cb.f_x, cb.f_xu)
        );
        let sigma = 0.3 - 0.4 * 0.9;
        let expected = sigma * 0.4f64.powi(4) * (0.4 * 0.9f64).exp() * (2.0 - 0.4);
        assert!((pb.f_xx - cb.f_xx - expected).abs() < 1e-15);

        // With σ₂ = 0 every printed-vs-exact difference carries a u factor.
        let p = problem(0.5, 0.3, 0.0, 0.0, 0.7);
        let pb = derivatives(&s, 0.0, &p, DerivativeMode::Paper).unwrap();
        let cb = derivatives(&s, 0.0, &p, DerivativeMode::Consistent).unwrap();
        assert_eq!(
            pb,
            DerivativeBundle {
                mode: DerivativeMode::Paper,
                ..cb
            }
        );
    }

    #[test]
    fn consistent_matches_finite_differences() {
        let p = problem(0.8, 0.5, 0.3, 0.2, -0.1).with_mbar(0.3);
        let r = finite_difference_check(&st(0.3, 0.8), 0.4, &p, DerivativeMode::Consistent, 1e-5)
            .unwrap();
        assert!(r.max_rel_error() <= 1e-5, "{r:?}");
    }

    #[test]
    fn paper_f_x_discrepancy_is_twice_the_cost_term() {
        let p = problem(0.8, 0.5, 0.3, 0.0, 0.0);
        let s = st(0.3, 0.8);
        let u = 0.4;
        let pb = derivatives(&s, u, &p, DerivativeMode::Paper).unwrap();
        let fd = fd_estimates(&s, u, &p, 1e-5).unwrap();
        let cost_term = p.payoff.c * u * u / (2.0 * p.payoff.discount_gap() * 0.8f64.powf(1.5))
            * (-p.payoff.r * 0.3).exp();
        assert!(((fd.f_x - pb.f_x) - 2.0 * cost_term).abs() < 1e-8);
    }

    #[test]
    fn paper_mode_fd_at_u_zero_sigma2_zero() {
        let p = problem(0.8, 0.5, 0.0, 0.0, 0.0);
        let r =
            finite_difference_check(&st(0.3, 0.8), 0.0, &p, DerivativeMode::Paper, 1e-5).unwrap();
        assert_eq!(r.component("f_u").unwrap().rel_error, 0.0);
        assert_eq!(r.component("f_xu").unwrap().analytic, 0.0);
        assert!(r.component("f_xu").unwrap().rel_error < 1e-9);
        assert!(r.max_rel_error() < 1e-6);
    }

    #[test]
    fn paper_mode_fd_error_bounded_below_by_discrepancy() {
        let p = problem(0.8, 0.5, 0.3, 0.0, 0.0);
        let s = st(0.0, 1.0);
        let r = finite_difference_check(&s, 0.5, &p, DerivativeMode::Paper, 1e-5).unwrap();
        let d = paper_discrepancy(&s, 0.5, &p).unwrap();
        let fx = r.component("f_x").unwrap();
        let floor = fx.analytic.abs().max(1.0);
        assert!(fx.rel_error >= d.f_x.abs() / floor - 1e-8);
    }

    #[test]
    fn f_xxu_vanishes_only_at_u_zero() {
        let p = problem(0.8, 0.5, 0.3, 0.0, 0.0);
        let s = st(0.2, 1.1);
        assert_eq!(consistent_f_xxu(&s, 0.0, &p).unwrap(), 0.0);
        assert!(consistent_f_xxu(&s, 0.5, &p).unwrap() != 0.0);
        // Third mixed central difference at u = 0.
        let h = 1e-3;
        let k = 1e-2;
        let fxx = |u: f64| {
            let f = |x: f64| hand_coded_f(&st(0.2, x), u, &p).unwrap();
            (f(1.1 + h) - 2.0 * f(1.1) + f(1.1 - h)) / (h * h)
        };
        let fd = (fxx(k) - fxx(-k)) / (2.0 * k);
        assert!(fd.abs() < 1e-5, "{fd}");
    }

    #[test]
    fn generator_matches_hand_coded() {
        let p = problem(0.8, 0.5, 0.3, 0.2, -0.1).with_mbar(0.3);
        for &(s, x, u) in &[(0.0, 0.5, 0.0), (0.4, 1.7, 0.3), (0.9, 3.2, 1.0)] {
            let a = assemble_f_from_generator(&st(s, x), u, &p, false).unwrap();
            let b = hand_coded_f(&st(s, x), u, &p).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}
