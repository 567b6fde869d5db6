use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("invalid input: {0}")]
    InputDomain(String),
    /// A configuration violates a structural constraint.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// Exhaustive enumeration would exceed the configured cap.
    #[error("{what}: {count} candidates exceed the cap of {cap}")]
    Infeasible { what: &'static str, count: u128, cap: u128 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
