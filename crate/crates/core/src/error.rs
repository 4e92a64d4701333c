use thiserror::Error;

use crate::asymptotics::ConstantRequest;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A dense factorization would exceed the configured size budget.
    #[error("resource error: {what} needs {size} points, limit is {limit}")]
    Resource {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    /// The requested case is not covered by any available formula.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// One or more Pickands/Piterbarg constants are not available.
    #[error("missing constant(s): {}; estimate them first or use a simulation-backed provider", list(.0))]
    MissingConstant(Vec<ConstantRequest>),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Covariance matrix failed the positive semidefinite check.
    #[error("indefinite covariance: most negative eigenvalue {0:e}")]
    Indefinite(f64),

    /// A sampled quantity left its plausible range; indicates a parameter bug.
    #[error("diagnostics: {0}")]
    Diagnostics(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

fn list(reqs: &[ConstantRequest]) -> String {
    reqs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ")
}
