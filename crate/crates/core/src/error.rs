use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter record violates one of its invariants.
    #[error("{0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate transition density")]
    DegenerateDensity,

    #[error("path step {step} was clamped at x=0")]
    ClampedStep { step: usize },

    #[error("cost singular at x=0")]
    CostSingular,

    #[error("horizon {horizon} is not a multiple of dt {dt}")]
    StepMismatch { horizon: f64, dt: f64 },

    #[error("state below closed-form domain")]
    BelowDomain,

    #[error("degenerate Laplace expansion")]
    DegenerateLaplace,

    #[error("kernel not normalizable at grid point {0}")]
    KernelNotNormalizable(usize),

    #[error("negative state {0} under square-root drift")]
    NegativeState(f64),

    #[error("insufficient grid: {0}")]
    InsufficientGrid(String),
}
