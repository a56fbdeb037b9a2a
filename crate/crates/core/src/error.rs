use thiserror::Error;

/// Errors raised by the library.
///
/// The CLI maps these to exit codes: configuration and domain problems are
/// caller mistakes (exit 2 when raised while validating a config), numerical
/// failures are data-dependent (exit 3).
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the mathematical inputs was violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration file or parameter set could not be validated.
    #[error("config error: {0}")]
    Config(String),

    /// A computation failed for numerical reasons (factorization, conditioning).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
