//! Transition density `Ψ_s(x)` on a fixed grid: the Gaussian-reduced
//! path-integral kernel and the Wick-rotated pointwise update.

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::Policy;
use crate::error::{Error, Result};
use crate::lagrangian::derivatives;
use crate::model::{DerivativeMode, KernelExponentMode, Problem, State};
use crate::quadrature::trapezoid;

/// Mass allowed in the two outermost cells before a warning is attached.
pub const BOUNDARY_MASS_TOL: f64 = 1e-6;

/// `∫exp{−qξ²/(εβ) + λεξ/β} dξ = exp{λ²ε³/(4qβ)}·√(επβ/q)`, where
/// `β` stands for the value of `(1+β)^t`.
pub fn gaussian_integral_closed(q: f64, lambda: f64, eps: f64, beta_pow: f64) -> Result<f64> {
    for (name, v) in [("q", q), ("eps", eps), ("beta_pow", beta_pow)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    Ok((lambda * lambda * eps.powi(3) / (4.0 * q * beta_pow)).exp()
        * (eps * std::f64::consts::PI * beta_pow / q).sqrt())
}

/// Second-order expansion of the Lagrangian around one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalExpansion {
    pub f: f64,
    pub f_x: f64,
    pub f_xx: f64,
}

/// A Lagrangian evaluated along a feedback policy, as seen by the density
/// updates.
pub trait LagrangianField: Sync {
    fn local(&self, s: f64, x: f64) -> Result<LocalExpansion>;
}

/// The player's Lagrangian with the control supplied by `policy`.
pub struct PolicyField<'a, P: Policy + ?Sized> {
    pub problem: &'a Problem,
    pub policy: &'a P,
    pub derivative_mode: DerivativeMode,
}

impl<P: Policy + ?Sized> LagrangianField for PolicyField<'_, P> {
    fn local(&self, s: f64, x: f64) -> Result<LocalExpansion> {
        let state = State::new(s, x)?;
        let u = self.policy.control(&state).value();
        let d = derivatives(&state, u, self.problem, self.derivative_mode)?;
        Ok(LocalExpansion {
            f: d.f,
            f_x: d.f_x,
            f_xx: d.f_xx,
        })
    }
}

/// `(a, b) = (½·f_xx, f_x)`.
pub fn laplace_from(local: &LocalExpansion) -> Result<(f64, f64)> {
    if local.f_xx == 0.0 {
        return Err(Error::DegenerateLaplace);
    }
    Ok((0.5 * local.f_xx, local.f_x))
}

pub fn laplace_coefficients(
    state: &State,
    u: f64,
    problem: &Problem,
    mode: DerivativeMode,
) -> Result<(f64, f64)> {
    let d = derivatives(state, u, problem, mode)?;
    laplace_from(&LocalExpansion {
        f: d.f,
        f_x: d.f_x,
        f_xx: d.f_xx,
    })
}

/// Growth rate `b²/(4a) − f` (rederived) or `b²/(4a²) − f` (paper).
pub fn growth_rate(a: f64, b: f64, f: f64, mode: KernelExponentMode) -> f64 {
    match mode {
        KernelExponentMode::Rederived => b * b / (4.0 * a) - f,
        KernelExponentMode::Paper => b * b / (4.0 * a * a) - f,
    }
}

/// Full Gaussian-reduced kernel value `√(π/(εa))·exp{ε·E}` at one point.
pub fn kernel_multiplier(
    local: &LocalExpansion,
    eps: f64,
    mode: KernelExponentMode,
) -> Result<f64> {
    let (a, b) = laplace_from(local)?;
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel needs a > 0, got {a}"
        )));
    }
    Ok((std::f64::consts::PI / (eps * a)).sqrt() * (eps * growth_rate(a, b, local.f, mode)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct KernelOptions {
    pub exponent_mode: KernelExponentMode,
    /// Adds `(x − b/(2a))·∂Ψ/∂x` to the transported value.
    pub gradient_correction: bool,
    /// Keeps the x-dependent factor `√(π/(εa))` instead of folding it into
    /// the per-step normalizer.
    pub keep_gaussian_prefactor: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub x_grid: Vec<f64>,
    pub psi: Vec<f64>,
    pub s: f64,
    pub normalized: bool,
    pub warnings: Vec<String>,
}

impl DensityGrid {
    pub fn new(x_grid: Vec<f64>, psi: Vec<f64>, s: f64) -> Result<Self> {
        if x_grid.len() < 3 {
            return Err(Error::InsufficientGrid(format!(
                "{} points, need at least 3",
                x_grid.len()
            )));
        }
        if x_grid.len() != psi.len() {
            return Err(Error::InvalidArgument(
                "x_grid and psi differ in length".into(),
            ));
        }
        if x_grid.windows(2).any(|w| !(w[1] > w[0])) || x_grid.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "x_grid must be strictly increasing".into(),
            ));
        }
        if psi.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument(
                "psi must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            x_grid,
            psi,
            s,
            normalized: false,
            warnings: Vec::new(),
        })
    }

    /// Uniform grid with a Gaussian bump, zeroed at both ends and normalized.
    pub fn gaussian(lo: f64, hi: f64, n: usize, mean: f64, sd: f64, s: f64) -> Result<Self> {
        if n < 3 || !(hi > lo) || !(sd > 0.0) {
            return Err(Error::InsufficientGrid(format!(
                "[{lo}, {hi}] with {n} points, sd {sd}"
            )));
        }
        let x: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let psi = x
            .iter()
            .map(|v| (-0.5 * ((v - mean) / sd).powi(2)).exp())
            .collect();
        let mut g = Self::new(x, psi, s)?;
        g.finish()?;
        Ok(g)
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.x_grid, &self.psi)
    }

    /// Trapezoid mass of the first and last cells.
    pub fn boundary_mass(&self) -> f64 {
        let n = self.x_grid.len();
        let cell = |i: usize| {
            0.5 * (self.psi[i] + self.psi[i + 1]) * (self.x_grid[i + 1] - self.x_grid[i])
        };
        cell(0) + cell(n - 2)
    }

    /// Zeroes both ends, rescales to unit mass and records boundary warnings.
    fn finish(&mut self) -> Result<()> {
        let n = self.psi.len();
        self.psi[0] = 0.0;
        self.psi[n - 1] = 0.0;
        let mass = self.mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::DegenerateDensity);
        }
        for p in &mut self.psi {
            *p /= mass;
        }
        self.normalized = true;
        let edge = self.boundary_mass();
        if edge > BOUNDARY_MASS_TOL {
            self.warnings.push(format!(
                "boundary mass {edge} exceeds {BOUNDARY_MASS_TOL} at s = {}; widen the grid",
                self.s
            ));
        }
        Ok(())
    }

    /// Central-difference `∂Ψ/∂x` at interior points; zero at the ends.
    fn gradient(&self) -> Vec<f64> {
        let interior = self
            .psi
            .windows(3)
            .zip(self.x_grid.windows(3))
            .map(|(p, x)| (p[2] - p[0]) / (x[2] - x[0]));
        std::iter::once(0.0)
            .chain(interior)
            .chain(std::iter::once(0.0))
            .collect()
    }
}

fn check_input(grid: &DensityGrid, eps: f64) -> Result<()> {
    if !grid.normalized {
        return Err(Error::InvalidArgument(
            "density grid must be normalized".into(),
        ));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    Ok(())
}

/// Laplace coefficients and growth rate at interior points. The ends are
/// absorbing and never evaluated.
fn interior_terms<L: LagrangianField + ?Sized>(
    grid: &DensityGrid,
    field: &L,
    mode: KernelExponentMode,
) -> Result<Vec<Option<(f64, f64, f64)>>> {
    let n = grid.x_grid.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            if i == 0 || i == n - 1 {
                return Ok(None);
            }
            let local = field.local(grid.s, grid.x_grid[i])?;
            let (a, b) = laplace_from(&local)?;
            if !(a > 0.0) {
                return Err(Error::KernelNotNormalizable(i));
            }
            Ok(Some((a, b, growth_rate(a, b, local.f, mode))))
        })
        .collect()
}

/// One step of the Gaussian-reduced path-integral kernel.
pub fn kernel_step<L: LagrangianField + ?Sized>(
    grid: &DensityGrid,
    eps: f64,
    field: &L,
    opts: KernelOptions,
) -> Result<DensityGrid> {
    check_input(grid, eps)?;
    let terms = interior_terms(grid, field, opts.exponent_mode)?;
    let grad = if opts.gradient_correction {
        Some(grid.gradient())
    } else {
        None
    };
    let mut negative = 0usize;
    let psi: Vec<f64> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let Some((a, b, rate)) = *t else { return 0.0 };
            let mut weight = (eps * rate).exp();
            if opts.keep_gaussian_prefactor {
                weight *= (std::f64::consts::PI / (eps * a)).sqrt();
            }
            let mut carried = grid.psi[i];
            if let Some(g) = &grad {
                carried += (grid.x_grid[i] - b / (2.0 * a)) * g[i];
            }
            let v = weight * carried;
            if v < 0.0 {
                negative += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    let mut out = DensityGrid {
        x_grid: grid.x_grid.clone(),
        psi,
        s: grid.s + eps,
        normalized: false,
        warnings: Vec::new(),
    };
    if negative > 0 {
        out.warnings.push(format!(
            "gradient term drove {negative} points negative; set to 0"
        ));
    }
    out.finish()?;
    Ok(out)
}

/// One exponential-Euler step of `∂Ψ/∂s = E·Ψ`.
pub fn schrodinger_step<L: LagrangianField + ?Sized>(
    grid: &DensityGrid,
    eps: f64,
    field: &L,
    mode: KernelExponentMode,
) -> Result<DensityGrid> {
    check_input(grid, eps)?;
    let terms = interior_terms(grid, field, mode)?;
    let psi = terms
        .iter()
        .zip(&grid.psi)
        .map(|(t, p)| t.map_or(0.0, |(_, _, rate)| p * (eps * rate).exp()))
        .collect();
    let mut out = DensityGrid {
        x_grid: grid.x_grid.clone(),
        psi,
        s: grid.s + eps,
        normalized: false,
        warnings: Vec::new(),
    };
    out.finish()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    Kernel,
    Schrodinger,
}

/// Runs `n_steps` updates and returns the initial grid followed by every
/// intermediate grid.
pub fn evolve<L: LagrangianField + ?Sized>(
    initial: DensityGrid,
    eps: f64,
    n_steps: usize,
    field: &L,
    opts: KernelOptions,
    stepper: Stepper,
) -> Result<Vec<DensityGrid>> {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(initial);
    for _ in 0..n_steps {
        let last = out.last().expect("nonempty");
        let next = match stepper {
            Stepper::Kernel => kernel_step(last, eps, field, opts)?,
            Stepper::Schrodinger => schrodinger_step(last, eps, field, opts.exponent_mode)?,
        };
        out.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LagrangeParams, ModelParams, PayoffParams};
    use crate::quadrature::integrate;

    struct Synthetic<F: Fn(f64) -> LocalExpansion + Sync>(F);

    impl<F: Fn(f64) -> LocalExpansion + Sync> LagrangianField for Synthetic<F> {
        fn local(&self, _s: f64, x: f64) -> Result<LocalExpansion> {
            Ok((self.0)(x))
        }
    }

    fn quad(f: f64, f_x: f64, f_xx: f64) -> LocalExpansion {
        LocalExpansion { f, f_x, f_xx }
    }

    #[test]
    fn gaussian_examples() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((gaussian_integral_closed(1.0, 0.0, 1.0, 1.0).unwrap() - sqrt_pi).abs() < 1e-15);
        let v = gaussian_integral_closed(1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((v - std::f64::consts::E * sqrt_pi).abs() < 1e-14);
        assert!(gaussian_integral_closed(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(gaussian_integral_closed(1.0, 1.0, -1.0, 1.0).is_err());
        assert!(gaussian_integral_closed(1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_identity_grid() {
        for q in [0.1, 1.0, 10.0] {
            for lambda in [-2.0, 0.0, 2.0] {
                for eps in [0.01, 0.1, 1.0] {
                    for beta in [0.5, 1.0, 2.0] {
                        let closed = gaussian_integral_closed(q, lambda, eps, beta).unwrap();
                        let sd = (eps * beta / (2.0 * q)).sqrt();
                        let centre = lambda * eps * eps / (2.0 * q);
                        let g = |xi: f64| {
                            (-q * xi * xi / (eps * beta) + lambda * eps * xi / beta).exp()
                        };
                        let num = integrate(g, centre - 50.0 * sd, centre + 50.0 * sd, 1e-13, 0.0);
                        assert!((num - closed).abs() / closed <= 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn laplace_of_synthetic_quadratic() {
        assert_eq!(laplace_from(&quad(0.0, 3.0, 2.0)).unwrap(), (1.0, 3.0));
        assert_eq!(
            laplace_from(&quad(0.0, 3.0, 0.0)),
            Err(Error::DegenerateLaplace)
        );
    }

    #[test]
    fn laplace_degenerate_without_environmental_noise() {
        let p = Problem {
            model: ModelParams {
                a: 0.4,
                sigma1: 0.3,
                sigma2: 0.0,
            },
            payoff: PayoffParams {
                theta: 1.0,
                alpha: [0.1, 0.1, 0.1],
                c: 1.0,
                r: 0.5,
                mu_bar: 0.0,
                omega: 1.0,
                horizon: 1.0,
            },
            lagrange: LagrangeParams::default(),
            mbar: 0.0,
        };
        let s = State::new(0.0, 1.2).unwrap();
        let d = derivatives(&s, 0.0, &p, DerivativeMode::Paper).unwrap();
        assert!((d.f_x - 1.3).abs() < 1e-15);
        assert_eq!(
            laplace_coefficients(&s, 0.0, &p, DerivativeMode::Paper),
            Err(Error::DegenerateLaplace)
        );
    }

    #[test]
    fn kernel_multiplier_matches_integral() {
        for &(f, b, f_xx, eps) in &[
            (0.3, 0.7, 2.0, 0.1),
            (-1.0, -2.0, 5.0, 0.5),
            (0.0, 1.0, 0.4, 1.0),
        ] {
            let a = 0.5 * f_xx;
            let local = quad(f, b, f_xx);
            let m = kernel_multiplier(&local, eps, KernelExponentMode::Rederived).unwrap();
            // ∫exp{−ε(f + b·y + a·y²)}dy with q = ε²a, λ = −b, β = 1.
            let hand =
                (-eps * f).exp() * gaussian_integral_closed(eps * eps * a, -b, eps, 1.0).unwrap();
            assert!((m - hand).abs() / hand <= 1e-10);
            let sd = (1.0 / (2.0 * eps * a)).sqrt();
            let centre = -b / (2.0 * a);
            let num = integrate(
                |y| (-eps * (f + b * y + a * y * y)).exp(),
                centre - 50.0 * sd,
                centre + 50.0 * sd,
                1e-13,
                0.0,
            );
            assert!((m - num).abs() / num <= 1e-8);
        }
    }

    #[test]
    fn constant_field_keeps_density() {
        let g = DensityGrid::gaussian(0.0, 4.0, 201, 2.0, 0.3, 0.0).unwrap();
        let field = Synthetic(|_| quad(1.7, 0.4, 3.0));
        let out = kernel_step(&g, 0.05, &field, KernelOptions::default()).unwrap();
        for (a, b) in out.psi.iter().zip(&g.psi) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(out.s, 0.05);
    }

    #[test]
    fn exponent_modes_agree_only_at_unit_curvature() {
        let g = DensityGrid::gaussian(0.0, 4.0, 101, 2.0, 0.5, 0.0).unwrap();
        let run = |f_xx: f64, mode| {
            let field = Synthetic(move |x: f64| quad(0.1 * x, x, f_xx));
            schrodinger_step(&g, 0.1, &field, mode).unwrap().psi
        };
        let same = run(2.0, KernelExponentMode::Paper) == run(2.0, KernelExponentMode::Rederived);
        assert!(same);
        let a = run(3.0, KernelExponentMode::Paper);
        let b = run(3.0, KernelExponentMode::Rederived);
        assert!(a.iter().zip(&b).any(|(p, q)| (p - q).abs() > 1e-6));
    }

    #[test]
    fn zero_growth_keeps_density() {
        let g = DensityGrid::gaussian(0.0, 4.0, 101, 2.0, 0.4, 0.0).unwrap();
        // f = b²/(4a²) with a = 2, b = 2x.
        let field = Synthetic(|x: f64| quad(4.0 * x * x / 16.0, 2.0 * x, 4.0));
        let out = schrodinger_step(&g, 0.2, &field, KernelExponentMode::Paper).unwrap();
        for (a, b) in out.psi.iter().zip(&g.psi) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mass_concentrates_at_maximal_growth() {
        let g = DensityGrid::gaussian(0.0, 4.0, 81, 2.0, 1.0, 0.0).unwrap();
        // Growth rate b²/(4a) − f = −(x − 1.3)² with a = 1, b = 0.
        let field = Synthetic(|x: f64| quad((x - 1.3) * (x - 1.3), 0.0, 2.0));
        let out = evolve(
            g,
            0.5,
            400,
            &field,
            KernelOptions::default(),
            Stepper::Schrodinger,
        )
        .unwrap();
        let last = out.last().unwrap();
        let argmax = (0..last.psi.len())
            .max_by(|&i, &j| last.psi[i].total_cmp(&last.psi[j]))
            .unwrap();
        assert!((last.x_grid[argmax] - 1.3).abs() < 0.051);
        assert_eq!(out.len(), 401);
    }

    #[test]
    fn kernel_and_schrodinger_agree_without_gradient() {
        let g = DensityGrid::gaussian(0.2, 4.0, 128, 1.5, 0.3, 0.0).unwrap();
        let field = Synthetic(|x: f64| quad(x.sin(), x.cos(), 1.0 + x));
        let k = kernel_step(&g, 0.05, &field, KernelOptions::default()).unwrap();
        let s = schrodinger_step(&g, 0.05, &field, KernelExponentMode::Rederived).unwrap();
        for (a, b) in k.psi.iter().zip(&s.psi) {
            assert!((a - b).abs() < 1e-12);
        }
        let kept = KernelOptions {
            keep_gaussian_prefactor: true,
            ..Default::default()
        };
        let k = kernel_step(&g, 0.05, &field, kept).unwrap();
        assert!(k.psi.iter().zip(&s.psi).any(|(a, b)| (a - b).abs() > 1e-6));
    }

    #[test]
    fn outputs_are_normalized_and_nonnegative() {
        let g = DensityGrid::gaussian(0.0, 3.0, 64, 1.5, 0.3, 0.0).unwrap();
        let field = Synthetic(|x: f64| quad(x, 2.0 - x, 1.0 + x * x));
        let opts = KernelOptions {
            gradient_correction: true,
            ..Default::default()
        };
        let out = evolve(g, 0.1, 10, &field, opts, Stepper::Kernel).unwrap();
        for grid in &out {
            assert!((grid.mass() - 1.0).abs() < 1e-9);
            assert!(grid.psi.iter().all(|p| *p >= 0.0));
            assert_eq!(grid.psi[0], 0.0);
        }
    }

    #[test]
    fn nonpositive_curvature_is_rejected() {
        let g = DensityGrid::gaussian(0.0, 3.0, 11, 1.5, 0.3, 0.0).unwrap();
        let field = Synthetic(|x: f64| quad(0.0, 1.0, if x > 2.0 { -1.0 } else { 1.0 }));
        let err = kernel_step(&g, 0.1, &field, KernelOptions::default()).unwrap_err();
        assert_eq!(err, Error::KernelNotNormalizable(7));
        assert_eq!(err.to_string(), "kernel not normalizable at grid point 7");
    }

    #[test]
    fn narrow_grid_warns() {
        let g = DensityGrid::gaussian(0.0, 1.0, 21, 0.5, 2.0, 0.0).unwrap();
        assert_eq!(g.warnings.len(), 1);
        let g = DensityGrid::gaussian(0.0, 4.0, 101, 2.0, 0.2, 0.0).unwrap();
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn grid_validation() {
        assert!(DensityGrid::new(vec![0.0, 1.0, 1.0], vec![0.0; 3], 0.0).is_err());
        assert!(DensityGrid::new(vec![0.0, 1.0, 2.0], vec![0.0, -1.0, 0.0], 0.0).is_err());
        assert!(DensityGrid::new(vec![0.0, 1.0], vec![0.0; 2], 0.0).is_err());
        let g = DensityGrid::new(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 0.0], 0.0).unwrap();
        let field = Synthetic(|_| quad(0.0, 0.0, 1.0));
        assert!(kernel_step(&g, 0.1, &field, KernelOptions::default()).is_err());
    }
}
