use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("state (x={x}, g={g}) lies outside the domain [0,1] x [0,inf)")]
    OutsideDomain { x: f64, g: f64 },

    #[error("vector field is not differentiable at x={x}: {reason}")]
    NotDifferentiable { x: f64, reason: &'static str },

    #[error("non-finite value produced at t={t} (step size too large?)")]
    NonFinite { t: f64 },

    #[error("gain overflow at t={t}: g={g} exceeds {limit}")]
    GainOverflow { t: f64, g: f64, limit: f64 },

    #[error("stiffness at t={t} needs more than {limit} substeps per step")]
    TooStiff { t: f64, limit: usize },

    #[error("rate scale {rate_scale} is below the payoff-difference bound {bound} at t={t}")]
    RateScaleTooSmall { t: f64, rate_scale: f64, bound: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
