use thiserror::Error;

/// Failure classes shared by every module.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("term list is not hermitian: {0}")]
    NonHermitian(String),
    #[error("dimension guard exceeded: {positions} positions > limit {limit}")]
    DimensionGuard { positions: usize, limit: usize },
    #[error("hierarchy violation: {0}")]
    Hierarchy(String),
    #[error("frequency collision: {0}")]
    FrequencyCollision(String),
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("eigensolver did not converge: max residual {residual:.3e}")]
    NoConvergence { residual: f64 },
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("degeneracy lifted: {0}")]
    DegeneracyLifted(String),
}

/// Coarse grouping used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    PhysicsGuard,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidSpec(_)
            | Error::NonHermitian(_)
            | Error::InvalidEnvelope(_)
            | Error::InvalidArgument(_) => ErrorClass::Config,
            Error::DimensionGuard { .. }
            | Error::Hierarchy(_)
            | Error::FrequencyCollision(_)
            | Error::DegeneracyLifted(_) => ErrorClass::PhysicsGuard,
            Error::NoConvergence { .. } | Error::Integrator(_) => ErrorClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
