use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A closed-form expression hits a pole.
    #[error("singularity: {0}")]
    Singularity(String),

    /// A quantity needed for normalization (probability, evidence, count) vanishes.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A 2x2 matrix could not be inverted reliably.
    #[error("singular matrix (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },

    /// Quadrature or an iterative solver did not meet its tolerance.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// An integrand or intermediate value was NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    /// True for errors caused by caller-supplied values rather than numerics.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Domain(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
