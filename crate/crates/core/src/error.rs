use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument was outside the domain accepted by the operation.
    #[error("invalid input: {0}")]
    Input(String),

    /// An iterative kernel failed to converge.
    #[error("internal numerical failure: {0}")]
    Internal(String),

    /// A sum-of-exponentials expansion could not be certified to the requested tolerance.
    #[error("sum-of-exponentials construction failed: achieved error {achieved:e} exceeds tolerance {tolerance:e}")]
    Construction { achieved: f64, tolerance: f64 },

    /// A stateful evaluator was driven out of order.
    #[error("state error: {0}")]
    State(String),

    /// The discrete system could not be assembled or factorised.
    #[error("assembly error: {0}")]
    Assembly(String),

    /// The run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for failures of the numerics (certification, assembly, convergence)
    /// as opposed to bad user input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Internal(_) | Error::Construction { .. } | Error::Assembly(_) | Error::State(_)
        )
    }
}
