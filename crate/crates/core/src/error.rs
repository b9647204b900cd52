use thiserror::Error;

use crate::stability::NewtonTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The result is not representable as a finite 64-bit float.
    #[error("range error: {0}")]
    Range(String),

    #[error("Newton iteration did not converge after {} iterations", .trace.iterations)]
    NewtonDiverged { trace: Box<NewtonTrace> },

    /// A property that the theory guarantees was violated at runtime.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("allocation solver failed: {0}")]
    Allocation(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
