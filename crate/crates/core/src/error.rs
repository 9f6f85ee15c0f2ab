use std::fmt;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// First violated invariant found while validating a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub s: Option<usize>,
    pub a: Option<usize>,
    pub h: Option<usize>,
    pub row_sum: Option<f64>,
    pub reason: String,
}

impl ValidationError {
    pub(crate) fn general(reason: impl Into<String>) -> Self {
        Self {
            s: None,
            a: None,
            h: None,
            row_sum: None,
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.reason)?;
        if let Some(h) = self.h {
            write!(f, " at h={h}")?;
        }
        if let (Some(s), Some(a)) = (self.s, self.a) {
            write!(f, " at (s={s}, a={a})")?;
        } else if let Some(s) = self.s {
            write!(f, " at s={s}")?;
        }
        if let Some(sum) = self.row_sum {
            write!(f, " (row sum {sum})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(ValidationError),
    #[error("singular system: {0}")]
    Singular(String),
    #[error("step h={h} out of range 1..={horizon}")]
    StepOutOfRange { h: usize, horizon: usize },
    #[error("gamma = 1 is not supported by this operation")]
    GammaOneUnsupported,
    #[error("inclusion-exclusion is limited to n <= 20 cells, got {0}")]
    InfeasibleN(usize),
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty model")]
    EmptyModel,
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("alpha = 1 makes the sample bound diverge")]
    AlphaOneDivergence,
    #[error("policy space too large: {0} free parameters (at most 8 supported)")]
    PolicySpaceTooLarge(usize),
    #[error("unknown environment {0:?}")]
    UnknownEnv(String),
    #[error("mode/source mismatch: {0}")]
    ModeMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ValidationError> for Error {
    fn from(e: ValidationError) -> Self {
        Error::Validation(e)
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
