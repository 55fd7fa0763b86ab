//! Parameter records, state/control value types and mode flags.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients of the goal dynamics `dx = (a√x − σ₂x − u)ds + (σ₁ − σ₂x)dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Drift strength multiplying √x.
    pub a: f64,
    /// Passing-network volatility.
    pub sigma1: f64,
    /// Environmental/strategic volatility.
    pub sigma2: f64,
}

/// Economic parameters of the player's payoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffParams {
    /// Injury-risk coefficient.
    pub theta: f64,
    /// Assist rate, pass accuracy and dribbling coefficients.
    pub alpha: [f64; 3],
    /// Marginal cost of stubbornness.
    pub c: f64,
    /// Discount rate.
    pub r: f64,
    /// Average drift coefficient.
    pub mu_bar: f64,
    /// Terminal bonus weight.
    pub omega: f64,
    /// Match length `t`.
    pub horizon: f64,
}

impl PayoffParams {
    /// `θ + α₁ + α₂ + α₃`, the marginal payoff of one unit of `x`.
    pub fn skill(&self) -> f64 {
        self.theta + self.alpha.iter().sum::<f64>()
    }

    /// `r − μ̄`, the denominator of the performance cost.
    pub fn discount_gap(&self) -> f64 {
        self.r - self.mu_bar
    }
}

/// Lagrange multiplier increments: `l0 = dλ(s)`, `l1 = dλ/ds`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LagrangeParams {
    #[serde(default)]
    pub l0: f64,
    #[serde(default)]
    pub l1: f64,
}

/// Time and goal level. `x` may exceed 1; only `x ≥ 0` is enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct State {
    pub s: f64,
    pub x: f64,
}

impl State {
    pub fn new(s: f64, x: f64) -> Result<Self> {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "time {s} must be finite and >= 0"
            )));
        }
        if !x.is_finite() || x < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "state {x} must be finite and >= 0"
            )));
        }
        Ok(Self { s, x })
    }

    pub fn within(self, horizon: f64) -> Result<Self> {
        if self.s > horizon {
            return Err(Error::InvalidArgument(format!(
                "time {} beyond horizon {horizon}",
                self.s
            )));
        }
        Ok(self)
    }
}

/// Stubbornness level, always inside `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(into = "f64", from = "f64")]
pub struct Control(f64);

impl Control {
    pub const ZERO: Control = Control(0.0);

    /// Clamps `u` into `[0, 1]`. NaN maps to 0.
    pub fn clamped(u: f64) -> Self {
        if u.is_nan() {
            Control(0.0)
        } else {
            Control(u.clamp(0.0, 1.0))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<f64> for Control {
    fn from(u: f64) -> Self {
        Control::clamped(u)
    }
}

impl From<Control> for f64 {
    fn from(u: Control) -> Self {
        u.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Partial derivatives exactly as printed in the worked example.
    #[default]
    Paper,
    /// Calculus-exact partial derivatives of the Lagrangian.
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NashMode {
    /// `f_u·f_xx² − 2·f_x·f_xu`.
    #[default]
    Paper,
    /// `f_u·f_xx − f_x·f_xu`, from the completed-square exponent `b²/(4a)`.
    Rederived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelExponentMode {
    /// Growth rate `b²/(4a²) − f`.
    Paper,
    /// Growth rate `b²/(4a) − f`.
    #[default]
    Rederived,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormMode {
    /// The printed `z*` formula, evaluated as displayed.
    #[serde(alias = "paper")]
    PaperVerbatim,
    /// Quadratic in `z = u²` from expanding `k₁(k₂z + A₃)² − k₃z + k₄`.
    #[default]
    Rederived,
}

macro_rules! mode_display {
    ($ty:ty, $($variant:ident => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }
    };
}

mode_display!(DerivativeMode, Paper => "paper", Consistent => "consistent");
mode_display!(NashMode, Paper => "paper", Rederived => "rederived");
mode_display!(KernelExponentMode, Paper => "paper", Rederived => "rederived");
mode_display!(ClosedFormMode, PaperVerbatim => "paper_verbatim", Rederived => "rederived");

/// Selects paper-verbatim or rederived variants of the formulas whose printed
/// form disagrees with direct calculation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ModeFlags {
    #[serde(default)]
    pub derivative_mode: DerivativeMode,
    #[serde(default)]
    pub nash_mode: NashMode,
    #[serde(default)]
    pub kernel_exponent_mode: KernelExponentMode,
    #[serde(default)]
    pub closed_form_mode: ClosedFormMode,
}

impl fmt::Display for ModeFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "derivative={};nash={};kernel={};closed_form={}",
            self.derivative_mode, self.nash_mode, self.kernel_exponent_mode, self.closed_form_mode
        )
    }
}

/// A validated parameter bundle plus the terminal constant `M̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub model: ModelParams,
    pub payoff: PayoffParams,
    #[serde(default)]
    pub lagrange: LagrangeParams,
    /// Terminal bonus treated as a constant inside the Lagrangian.
    pub mbar: f64,
}

impl Problem {
    /// Bundles the parameters with `M̄ = ω·e^{−rt}·√x₀`.
    pub fn new(
        model: ModelParams,
        payoff: PayoffParams,
        lagrange: LagrangeParams,
        x0: f64,
    ) -> Self {
        let mbar = payoff.omega * (-payoff.r * payoff.horizon).exp() * x0.max(0.0).sqrt();
        Self {
            model,
            payoff,
            lagrange,
            mbar,
        }
    }

    pub fn with_mbar(mut self, mbar: f64) -> Self {
        self.mbar = mbar;
        self
    }
}

fn check(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.to_string()))
    }
}

/// Checks every parameter invariant in declaration order and reports the
/// first violation by name.
pub fn validate_params(
    model: ModelParams,
    payoff: PayoffParams,
    lagrange: LagrangeParams,
) -> Result<(ModelParams, PayoffParams, LagrangeParams)> {
    check(model.a.is_finite(), "a must be finite")?;
    check(
        model.sigma1.is_finite() && model.sigma1 >= 0.0,
        "sigma1 must be nonnegative",
    )?;
    check(
        model.sigma2.is_finite() && model.sigma2 >= 0.0,
        "sigma2 must be nonnegative",
    )?;

    check(
        payoff.theta.is_finite() && payoff.theta > 0.0,
        "theta must be positive",
    )?;
    for (i, alpha) in payoff.alpha.iter().enumerate() {
        if !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha{} must be finite",
                i + 1
            )));
        }
    }
    check(payoff.c.is_finite() && payoff.c > 0.0, "c must be positive")?;
    check(payoff.r.is_finite(), "r must be finite")?;
    check(payoff.mu_bar.is_finite(), "mu_bar must be finite")?;
    check(payoff.r > payoff.mu_bar, "r must exceed mu_bar")?;
    check(
        payoff.omega.is_finite() && payoff.omega > 0.0,
        "omega must be positive",
    )?;
    check(
        payoff.horizon.is_finite() && payoff.horizon > 0.0,
        "horizon must be positive",
    )?;

    check(lagrange.l0.is_finite(), "l0 must be finite")?;
    check(lagrange.l1.is_finite(), "l1 must be finite")?;
    Ok((model, payoff, lagrange))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> (ModelParams, PayoffParams, LagrangeParams) {
        (
            ModelParams {
                a: 1.0,
                sigma1: 0.3,
                sigma2: 0.1,
            },
            PayoffParams {
                theta: 1.0,
                alpha: [0.1, 0.1, 0.1],
                c: 1.0,
                r: 0.5,
                mu_bar: 0.0,
                omega: 1.0,
                horizon: 1.0,
            },
            LagrangeParams::default(),
        )
    }

    #[test]
    fn accepts_reference_bundle() {
        let (m, p, l) = base();
        assert_eq!(validate_params(m, p, l).unwrap(), (m, p, l));
    }

    #[test]
    fn rejects_r_below_mu_bar() {
        let (m, mut p, l) = base();
        p.r = 0.1;
        p.mu_bar = 0.2;
        let err = validate_params(m, p, l).unwrap_err();
        assert_eq!(err.to_string(), "r must exceed mu_bar");
    }

    #[test]
    fn rejects_negative_cost() {
        let (m, mut p, l) = base();
        p.c = -1.0;
        assert_eq!(
            validate_params(m, p, l).unwrap_err().to_string(),
            "c must be positive"
        );
    }

    #[test]
    fn first_violation_wins() {
        let (mut m, mut p, l) = base();
        m.sigma2 = -1.0;
        p.c = -1.0;
        p.r = -5.0;
        assert_eq!(
            validate_params(m, p, l).unwrap_err().to_string(),
            "sigma2 must be nonnegative"
        );
    }

    #[test]
    fn validation_is_idempotent() {
        let (m, p, l) = base();
        let once = validate_params(m, p, l).unwrap();
        let twice = validate_params(once.0, once.1, once.2).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn control_clamps() {
        assert_eq!(Control::clamped(1.7).value(), 1.0);
        assert_eq!(Control::clamped(-0.2).value(), 0.0);
        assert_eq!(Control::clamped(f64::NAN).value(), 0.0);
        assert_eq!(Control::clamped(0.25).value(), 0.25);
    }

    #[test]
    fn state_rejects_negative_x() {
        assert!(State::new(0.0, -1e-12).is_err());
        assert!(State::new(0.5, 3.0).unwrap().within(1.0).is_ok());
        assert!(State::new(1.5, 3.0).unwrap().within(1.0).is_err());
    }

    #[test]
    fn default_mbar_uses_initial_state() {
        let (m, p, l) = base();
        let prob = Problem::new(m, p, l, 4.0);
        assert!((prob.mbar - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
    }
}
