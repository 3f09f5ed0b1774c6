use thiserror::Error;

/// Errors raised by the simulation and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A numeric argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller supplied inconsistent or incomplete inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// No lattice candidate within the search bounds matched the coarse delay.
    #[error(
        "ambiguity resolution failed: best lattice residual {residual:.4} rad exceeds {tolerance:.4} rad; widen the search bounds"
    )]
    AmbiguityFailure { residual: f64, tolerance: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
