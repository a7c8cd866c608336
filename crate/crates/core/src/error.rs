use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("absorbing state: no reaction can fire{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Absorbing { context: Option<String> },

    #[error("no consistent fast state for slow value {0}")]
    NoConsistentState(i64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-positive diffusion {value} at grid point s = {s}")]
    NonPositiveDiffusion { s: f64, value: f64 },

    #[error("singular effective propensity at s = {s}: {reason}")]
    SingularClosure { s: i64, reason: String },

    #[error("generator is reducible: {closed_classes} closed classes")]
    Reducible { closed_classes: usize },

    #[error("stationary solve did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("truncation domain too small: {0}")]
    DomainTooSmall(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidNetwork(_) => "invalid_network",
            Error::Absorbing { .. } => "absorbing_state",
            Error::NoConsistentState(_) => "no_consistent_state",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonPositiveDiffusion { .. } => "non_positive_diffusion",
            Error::SingularClosure { .. } => "singular_closure",
            Error::Reducible { .. } => "reducible_generator",
            Error::NotConverged { .. } => "not_converged",
            Error::DomainTooSmall(_) => "domain_too_small",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
