use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The family or kernel cannot perform the requested operation.
    #[error("unsupported: {0}")]
    Capability(String),

    /// Every term feeding a ratio was zero, so no estimate can be formed.
    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last iterate {last})")]
    IterationFailed { last: f64, iterations: usize },

    #[error("enumeration needs {needed} branches, budget is {budget}")]
    Capacity { needed: u128, budget: u128 },

    #[error("quadrature did not reach tolerance: estimate {estimate}, error bound {error}")]
    Accuracy { estimate: f64, error: f64 },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
