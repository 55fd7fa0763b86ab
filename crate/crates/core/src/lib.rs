//! Goal-dynamics SDE simulation, player payoff evaluation and optimal
//! "stubbornness" feedback control for a single soccer player.
//!
//! The goal-scoring level `x` follows
//!
//! ```text
//! dx = (a·√x − σ₂·x − u) ds + (σ₁ − σ₂·x) dB
//! ```
//!
//! and the player chooses a stubbornness `u ∈ [0, 1]` to maximise a
//! discounted payoff plus terminal bonus. The crate provides the
//! Euler–Maruyama simulator, Monte Carlo payoff estimators, the stochastic
//! Lagrangian and its derivatives, the closed-form optimal control, the
//! Wick-rotated density propagation and a Feynman–Kac estimator, each paired
//! with numerical oracles (finite differences, quadrature, root scanning).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod density;
pub mod dynamics;
pub mod error;
pub mod feynman_kac;
pub mod lagrangian;
pub mod model;
pub mod payoff;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod text;

pub use error::{Error, Result};
pub use model::{
    ClosedFormMode, Control, DerivativeMode, KernelExponentMode, LagrangeParams, ModeFlags,
    ModelParams, NashMode, PayoffParams, Problem, State,
};
