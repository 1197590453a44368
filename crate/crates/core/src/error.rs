use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Validation(String),

    #[error("wealth level {wealth} is outside the domain of {utility} utility")]
    Domain { utility: &'static str, wealth: f64 },

    #[error("marginal utility {value} is outside the range of {utility} utility")]
    Range { utility: &'static str, value: f64 },

    #[error("conditional expectation undefined: no mass above {threshold}")]
    ZeroTailMass { threshold: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("root bracket failed: {0}")]
    Bracket(String),

    #[error("solver did not converge: {message} (mean residual {mean_residual:e}, variance residual {var_residual:e})")]
    NonConvergence {
        message: String,
        mean_residual: f64,
        var_residual: f64,
    },

    #[error("unsupported scenario: {0}")]
    Unsupported(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    /// Short machine-readable category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Domain { .. } | Error::Range { .. } => "domain",
            Error::ZeroTailMass { .. } => "tail",
            Error::Contract(_) | Error::Precondition(_) => "precondition",
            Error::Inconsistent(_) => "inconsistent",
            Error::Bracket(_) | Error::NonConvergence { .. } => "solver",
            Error::Unsupported(_) => "unsupported",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
