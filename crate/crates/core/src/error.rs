use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a formula or integral.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    /// Kernel evaluated at its singular point.
    #[error("singularity: {0}")]
    Singular(String),
    /// Measure-zero degenerate input, e.g. coincident times.
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("statistics error: {0}")]
    Statistics(String),
    #[error("regression error: {0}")]
    Regression(String),
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("solution blew up (non-finite value) at step {step}")]
    BlowUp { step: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
