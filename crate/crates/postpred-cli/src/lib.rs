//! Implementation of the `postpred` binary: configuration loading, the
//! `estimate`, `risk` and `validate` commands, and their CSV table formats.
//! Kept as a library so integration tests can exercise the pieces without
//! spawning a process.

pub mod config;
pub mod estimate;
pub mod risk_cmd;
pub mod tables;
pub mod validate;

use postpred::{
    DomainError, FamilyError, OracleError, PosteriorError, PredictiveError, PriorError, QuadError,
    RiskError,
};
use thiserror::Error;

/// A command failure, keyed to the process exit code contract: 2 for
/// configuration errors, 3 for input data errors, 4 for numerical
/// tolerance breaches, 5 for a risk-ordering violation.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Tolerance(String),
    #[error("{0}")]
    Ordering(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Data(_) => 3,
            AppError::Tolerance(_) => 4,
            AppError::Ordering(_) => 5,
        }
    }
}

impl From<FamilyError> for AppError {
    fn from(e: FamilyError) -> Self {
        match e {
            FamilyError::Parse { .. } | FamilyError::BadPair { .. } => AppError::Data(e.to_string()),
            _ => AppError::Config(e.to_string()),
        }
    }
}

impl From<PriorError> for AppError {
    fn from(e: PriorError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<DomainError> for AppError {
    fn from(e: DomainError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<QuadError> for AppError {
    fn from(e: QuadError) -> Self {
        match e {
            QuadError::InvalidSettings(_) => AppError::Config(e.to_string()),
            _ => AppError::Tolerance(e.to_string()),
        }
    }
}

impl From<PosteriorError> for AppError {
    fn from(e: PosteriorError) -> Self {
        AppError::Tolerance(e.to_string())
    }
}

impl From<PredictiveError> for AppError {
    fn from(e: PredictiveError) -> Self {
        AppError::Tolerance(e.to_string())
    }
}

impl From<RiskError> for AppError {
    fn from(e: RiskError) -> Self {
        match e {
            RiskError::UnknownEstimator(_) | RiskError::TooFewReplications { .. } => {
                AppError::Config(e.to_string())
            }
            RiskError::Family(inner) => inner.into(),
            RiskError::Domain(inner) => inner.into(),
            _ => AppError::Tolerance(e.to_string()),
        }
    }
}

impl From<OracleError> for AppError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::SampleSizeTooLarge { .. } | OracleError::TooManyEntries { .. } => {
                AppError::Config(e.to_string())
            }
            OracleError::NullConditioning { .. } => AppError::Data(e.to_string()),
            _ => AppError::Tolerance(e.to_string()),
        }
    }
}
