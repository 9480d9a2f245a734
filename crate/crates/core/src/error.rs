use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or operation received arguments outside its contract.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Evaluation was requested outside the mathematical domain of a formula
    /// (e.g. a generating function past its radius of convergence).
    #[error("domain error: {0}")]
    Domain(String),

    /// An exact computation would exceed its configured resource budget.
    #[error("budget exceeded: {what} needs {needed} but the limit is {limit}; {hint}")]
    Budget {
        what: String,
        needed: u128,
        limit: u128,
        hint: String,
    },

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Error::Budget { .. })
    }
}
