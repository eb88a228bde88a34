use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An order-parameter triplet or bound schedule is malformed.
    #[error("invalid parameters: {0}")]
    Invalid(String),

    /// A covariance that must be positive semidefinite is not.
    #[error("covariance not positive semidefinite: {0}")]
    NotPsd(String),

    /// A size or cost guard was exceeded.
    #[error("guard violated: {0}")]
    Guard(String),

    /// The PDE step bound was violated.
    #[error("unstable step: {0}")]
    Unstable(String),

    /// A computation produced a non-finite or degenerate value.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
