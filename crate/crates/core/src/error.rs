use thiserror::Error;

/// Errors produced by the models, allocators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("search space too large: {0} tuples")]
    SearchSize(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("no convergence: {0}")]
    NoConvergence(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
