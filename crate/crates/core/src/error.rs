use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument outside the admissible domain: {0}")]
    Domain(String),

    /// Zero market price of risk: the state-price density is a point mass.
    #[error("degenerate market: the market price of risk is zero")]
    DegenerateMarket,

    #[error("infeasible budget: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
