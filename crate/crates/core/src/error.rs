use std::fmt;

use serde::{Deserialize, Serialize};

/// A single failed invariant, named by the offending field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("time grid is not monotonically increasing at index {index}")]
    NonMonotonicGrid { index: usize },

    #[error("integrator could not meet relative tolerance {rtol:e} near t = {t} ns")]
    ToleranceNotMet { t: f64, rtol: f64 },

    #[error("spectrum integral diverges: eigenvalue with non-negative real part {re}")]
    DivergentIntegral { re: f64 },

    #[error("rate `{0}` must be strictly positive")]
    ZeroRate(&'static str),

    #[error("grid point {value} lies outside the baseline support [{lo}, {hi}]")]
    GridOutsideBaseline { value: f64, lo: f64, hi: f64 },

    #[error("Jacobian is rank deficient at the initial guess ({0})")]
    DegenerateJacobian(String),

    #[error("fit window too short: {0}")]
    WindowTooShort(String),

    #[error("spectra share no common support")]
    NoOverlap,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("response function is identically zero")]
    ZeroResponse,

    #[error("rate matrix has no emitting steady state")]
    SingularRateMatrix,

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// True for failures of a numerical procedure on otherwise valid input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ToleranceNotMet { .. }
                | Error::DivergentIntegral { .. }
                | Error::ZeroRate(_)
                | Error::DegenerateJacobian(_)
                | Error::SingularRateMatrix
                | Error::ZeroResponse
        )
    }

    pub(crate) fn violation(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Validation(vec![Violation::new(field, rule)])
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
