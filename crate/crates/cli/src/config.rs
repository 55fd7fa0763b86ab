//! JSON run configuration.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use stubborn_core::dynamics::step_count;
use stubborn_core::model::validate_params;
use stubborn_core::{LagrangeParams, ModeFlags, ModelParams, PayoffParams};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl GridSpec {
    /// `n` evenly spaced points from `min` to `max`; a single point is `min`.
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.min];
        }
        (0..self.n)
            .map(|i| {
                (self.min * (self.n - 1 - i) as f64 + self.max * i as f64) / (self.n - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub fd_rel: f64,
    pub residual_rel: f64,
    pub quad_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fd_rel: 1e-5,
            residual_rel: 1e-6,
            quad_rel: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub u_grid_n: usize,
    pub x_grid: GridSpec,
    pub tolerances: Tolerances,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_paths: 10_000,
            seed: 0,
            x0: 1.0,
            u_grid_n: 11,
            x_grid: GridSpec {
                min: 0.1,
                max: 3.0,
                n: 30,
            },
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    /// Number of trajectories written to the paths file.
    pub n_paths: usize,
    /// Constant control applied along every path.
    pub control: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            n_paths: 10,
            control: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeSection {
    pub s_grid: GridSpec,
    /// Paths used to rank several candidate roots by payoff-to-go.
    pub selection_paths: usize,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            s_grid: GridSpec {
                min: 0.0,
                max: 0.0,
                n: 1,
            },
            selection_paths: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepperName {
    Kernel,
    Schrodinger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub eps: f64,
    pub n_steps: usize,
    /// Points of the density grid spanning `numerics.x_grid`.
    pub n_points: usize,
    pub snapshot_every: usize,
    pub initial_mean: Option<f64>,
    pub initial_sd: f64,
    pub control: f64,
    pub stepper: StepperName,
    pub gradient_correction: bool,
    pub keep_gaussian_prefactor: bool,
}

impl Default for DensitySection {
    fn default() -> Self {
        Self {
            eps: 0.05,
            n_steps: 20,
            n_points: 512,
            snapshot_every: 5,
            initial_mean: None,
            initial_sd: 0.2,
            control: 0.5,
            stepper: StepperName::Kernel,
            gradient_correction: false,
            keep_gaussian_prefactor: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub payoff: PayoffParams,
    pub lagrange: LagrangeParams,
    pub modes: ModeFlags,
    pub numerics: Numerics,
    pub simulate: SimulateSection,
    pub optimize: OptimizeSection,
    pub density: DensitySection,
}

impl RunConfig {
    /// The configuration in its input schema, so the echo loads back unchanged.
    pub fn echo(&self) -> Value {
        let p = &self.payoff;
        serde_json::json!({
            "model": self.model,
            "payoff": {
                "theta": p.theta,
                "alpha1": p.alpha[0],
                "alpha2": p.alpha[1],
                "alpha3": p.alpha[2],
                "c": p.c,
                "r": p.r,
                "mu_bar": p.mu_bar,
                "omega": p.omega,
                "horizon": p.horizon,
            },
            "lagrange": self.lagrange,
            "modes": self.modes,
            "numerics": self.numerics,
            "simulate": self.simulate,
            "optimize": self.optimize,
            "density": self.density,
        })
    }
}

/// Command-line overrides of top-level numerics.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub n_paths: Option<usize>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text, Overrides::default())
}

pub fn parse_config(text: &str, overrides: Overrides) -> Result<RunConfig, CliError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| {
        CliError::Config(format!(
            "parse error at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let root = doc
        .as_object()
        .ok_or_else(|| CliError::Config("config must be a JSON object".into()))?;
    for key in root.keys() {
        if ![
            "model", "payoff", "lagrange", "modes", "numerics", "simulate", "optimize", "density",
        ]
        .contains(&key.as_str())
        {
            return Err(CliError::Config(format!("unknown section {key}")));
        }
    }

    let model_obj = section(root, "model")?;
    let model = ModelParams {
        a: number(model_obj, "model", "a")?,
        sigma1: number(model_obj, "model", "sigma1")?,
        sigma2: number(model_obj, "model", "sigma2")?,
    };
    let payoff_obj = section(root, "payoff")?;
    let payoff = PayoffParams {
        theta: number(payoff_obj, "payoff", "theta")?,
        alpha: [
            number(payoff_obj, "payoff", "alpha1")?,
            number(payoff_obj, "payoff", "alpha2")?,
            number(payoff_obj, "payoff", "alpha3")?,
        ],
        c: number(payoff_obj, "payoff", "c")?,
        r: number(payoff_obj, "payoff", "r")?,
        mu_bar: number(payoff_obj, "payoff", "mu_bar")?,
        omega: number(payoff_obj, "payoff", "omega")?,
        horizon: number(payoff_obj, "payoff", "horizon")?,
    };
    reject_unknown(model_obj, "model", &["a", "sigma1", "sigma2"])?;
    reject_unknown(
        payoff_obj,
        "payoff",
        &[
            "theta", "alpha1", "alpha2", "alpha3", "c", "r", "mu_bar", "omega", "horizon",
        ],
    )?;

    let lagrange: LagrangeParams = optional(root, "lagrange")?;
    let modes: ModeFlags = optional(root, "modes")?;
    let mut numerics: Numerics = optional(root, "numerics")?;
    let simulate: SimulateSection = optional(root, "simulate")?;
    let optimize: OptimizeSection = optional(root, "optimize")?;
    let density: DensitySection = optional(root, "density")?;

    if let Some(seed) = overrides.seed {
        numerics.seed = seed;
    }
    if let Some(dt) = overrides.dt {
        numerics.dt = dt;
    }
    if let Some(n) = overrides.n_paths {
        numerics.n_paths = n;
    }

    let (model, payoff, lagrange) =
        validate_params(model, payoff, lagrange).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg = RunConfig {
        model,
        payoff,
        lagrange,
        modes,
        numerics,
        simulate,
        optimize,
        density,
    };
    check_numerics(&cfg)?;
    Ok(cfg)
}

fn section<'a>(
    root: &'a Map<String, Value>,
    name: &str,
) -> Result<&'a Map<String, Value>, CliError> {
    root.get(name)
        .ok_or_else(|| CliError::Config(format!("{name} required")))?
        .as_object()
        .ok_or_else(|| CliError::Config(format!("{name} must be an object")))
}

fn number(obj: &Map<String, Value>, section: &str, key: &str) -> Result<f64, CliError> {
    obj.get(key)
        .ok_or_else(|| CliError::Config(format!("{section}.{key} required")))?
        .as_f64()
        .ok_or_else(|| CliError::Config(format!("{section}.{key} must be a number")))
}

fn reject_unknown(obj: &Map<String, Value>, section: &str, known: &[&str]) -> Result<(), CliError> {
    match obj.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(CliError::Config(format!("unknown field {section}.{k}"))),
        None => Ok(()),
    }
}

fn optional<T: DeserializeOwned + Default>(
    root: &Map<String, Value>,
    name: &str,
) -> Result<T, CliError> {
    match root.get(name) {
        None => Ok(T::default()),
        Some(v) => T::deserialize(v).map_err(|e| CliError::Config(format!("{name}: {e}"))),
    }
}

fn require(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

fn check_grid(g: &GridSpec, name: &str, min_points: usize) -> Result<(), CliError> {
    require(
        g.min.is_finite() && g.max.is_finite(),
        &format!("{name} bounds must be finite"),
    )?;
    require(
        g.n >= min_points,
        &format!("{name}.n must be at least {min_points}"),
    )?;
    require(
        g.n == 1 || g.max > g.min,
        &format!("{name}.max must exceed {name}.min"),
    )
}

fn check_numerics(cfg: &RunConfig) -> Result<(), CliError> {
    let n = &cfg.numerics;
    require(
        n.dt.is_finite() && n.dt > 0.0,
        "numerics.dt must be positive",
    )?;
    step_count(cfg.payoff.horizon, n.dt)
        .map_err(|_| CliError::Config("numerics.dt must divide payoff.horizon".into()))?;
    require(n.n_paths >= 1, "numerics.n_paths must be at least 1")?;
    require(
        n.x0.is_finite() && n.x0 >= 0.0,
        "numerics.x0 must be nonnegative",
    )?;
    require(n.u_grid_n >= 2, "numerics.u_grid_n must be at least 2")?;
    check_grid(&n.x_grid, "numerics.x_grid", 3)?;
    require(
        n.x_grid.min >= 0.0,
        "numerics.x_grid.min must be nonnegative",
    )?;
    let t = &n.tolerances;
    for (v, name) in [
        (t.fd_rel, "fd_rel"),
        (t.residual_rel, "residual_rel"),
        (t.quad_rel, "quad_rel"),
    ] {
        require(
            v.is_finite() && v > 0.0,
            &format!("numerics.tolerances.{name} must be positive"),
        )?;
    }

    require(
        cfg.simulate.n_paths >= 1,
        "simulate.n_paths must be at least 1",
    )?;
    require(
        cfg.simulate.control.is_finite(),
        "simulate.control must be finite",
    )?;

    let o = &cfg.optimize;
    check_grid(&o.s_grid, "optimize.s_grid", 1)?;
    require(
        o.s_grid.min >= 0.0 && o.s_grid.points().iter().all(|s| *s <= cfg.payoff.horizon),
        "optimize.s_grid must lie in [0, horizon]",
    )?;
    require(
        o.selection_paths >= 1,
        "optimize.selection_paths must be at least 1",
    )?;

    let d = &cfg.density;
    require(
        d.eps.is_finite() && d.eps > 0.0,
        "density.eps must be positive",
    )?;
    require(d.n_points >= 3, "density.n_points must be at least 3")?;
    require(
        d.snapshot_every >= 1,
        "density.snapshot_every must be at least 1",
    )?;
    require(
        d.initial_sd.is_finite() && d.initial_sd > 0.0,
        "density.initial_sd must be positive",
    )?;
    require(
        d.initial_mean.is_none_or(f64::is_finite),
        "density.initial_mean must be finite",
    )?;
    require(d.control.is_finite(), "density.control must be finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use stubborn_core::{ClosedFormMode, DerivativeMode, KernelExponentMode, NashMode};

    pub(crate) const MINIMAL: &str = r#"{
        "model": {"a": 0.5, "sigma1": 0.3, "sigma2": 0.1},
        "payoff": {"theta": 1.0, "alpha1": 0.1, "alpha2": 0.1, "alpha3": 0.1,
                   "c": 1.0, "r": 0.5, "mu_bar": 0.0, "omega": 1.0, "horizon": 1.0}
    }"#;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        parse_config(text, Overrides::default())
    }

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.lagrange, LagrangeParams { l0: 0.0, l1: 0.0 });
        assert_eq!(cfg.modes.derivative_mode, DerivativeMode::Paper);
        assert_eq!(cfg.modes.nash_mode, NashMode::Paper);
        assert_eq!(
            cfg.modes.kernel_exponent_mode,
            KernelExponentMode::Rederived
        );
        assert_eq!(cfg.modes.closed_form_mode, ClosedFormMode::Rederived);
        assert_eq!(cfg.numerics, Numerics::default());
        assert_eq!(cfg.payoff.alpha, [0.1, 0.1, 0.1]);
    }

    #[test]
    fn missing_cost_is_named() {
        let text = MINIMAL.replace("\"c\": 1.0, ", "");
        assert_eq!(parse(&text).unwrap_err().to_string(), "payoff.c required");
    }

    #[test]
    fn validation_message_is_verbatim() {
        let text = MINIMAL.replace("\"mu_bar\": 0.0", "\"mu_bar\": 0.7");
        assert_eq!(
            parse(&text).unwrap_err().to_string(),
            "r must exceed mu_bar"
        );
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse("{\n  \"model\": {\n    \"a\": ,\n")
            .unwrap_err()
            .to_string();
        assert!(err.starts_with("parse error at line 3 column"), "{err}");
    }

    #[test]
    fn modes_and_overrides() {
        let text = MINIMAL.replace(
            "\"model\"",
            "\"modes\": {\"derivative_mode\": \"consistent\", \"closed_form_mode\": \"paper\"}, \"model\"",
        );
        let cfg = parse_config(
            &text,
            Overrides {
                seed: Some(9),
                dt: Some(0.05),
                n_paths: Some(3),
            },
        )
        .unwrap();
        assert_eq!(cfg.modes.derivative_mode, DerivativeMode::Consistent);
        assert_eq!(cfg.modes.closed_form_mode, ClosedFormMode::PaperVerbatim);
        assert_eq!(
            (cfg.numerics.seed, cfg.numerics.dt, cfg.numerics.n_paths),
            (9, 0.05, 3)
        );
    }

    #[test]
    fn rejects_bad_numerics_and_unknown_fields() {
        let dt = MINIMAL.replace("\"model\"", "\"numerics\": {\"dt\": 0.3}, \"model\"");
        assert_eq!(
            parse(&dt).unwrap_err().to_string(),
            "numerics.dt must divide payoff.horizon"
        );
        let typo = MINIMAL.replace("\"sigma2\"", "\"sigma_2\"");
        assert_eq!(
            parse(&typo).unwrap_err().to_string(),
            "model.sigma2 required"
        );
        let extra = MINIMAL.replace("\"a\": 0.5", "\"a\": 0.5, \"b\": 1");
        assert_eq!(
            parse(&extra).unwrap_err().to_string(),
            "unknown field model.b"
        );
        let mode = MINIMAL.replace(
            "\"model\"",
            "\"modes\": {\"nash_mode\": \"other\"}, \"model\"",
        );
        assert!(parse(&mode)
            .unwrap_err()
            .to_string()
            .starts_with("modes: unknown variant"));
    }

    #[test]
    fn echo_loads_back_unchanged() {
        let cfg = parse(MINIMAL).unwrap();
        let again = parse(&cfg.echo().to_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn grid_points() {
        assert_eq!(
            GridSpec {
                min: 0.0,
                max: 1.0,
                n: 3
            }
            .points(),
            vec![0.0, 0.5, 1.0]
        );
        assert_eq!(
            GridSpec {
                min: 0.2,
                max: 0.2,
                n: 1
            }
            .points(),
            vec![0.2]
        );
    }
}
