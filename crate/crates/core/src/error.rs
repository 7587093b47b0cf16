use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller handed over data whose shape disagrees with the model or pattern set.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("all rule firing strengths underflowed")]
    DegenerateActivation,

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("line {line}: cannot parse column `{column}`: {detail}")]
    Parse {
        line: usize,
        column: String,
        detail: String,
    },

    #[error("line {line}: date {date} is not after the previous row")]
    Ordering { line: usize, date: NaiveDate },

    #[error("line {line}: gap in daily series, first missing date is {missing}")]
    Gap { line: usize, missing: NaiveDate },

    #[error("missing channel `{0}`")]
    MissingChannel(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid alarm policy: {0}")]
    Policy(String),

    #[error("unsupported option: {0}")]
    Unsupported(String),

    #[error("output path {} already exists (use --force to overwrite)", .0.display())]
    OutputExists(PathBuf),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class. `2` is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::Io { .. } => 4,
            Error::Parse { .. } | Error::Ordering { .. } | Error::Gap { .. } | Error::Csv(_) => 5,
            Error::MissingChannel(_) => 6,
            Error::InsufficientData(_) => 7,
            Error::Diverged { .. } | Error::DegenerateActivation => 8,
            Error::Contract(_) | Error::RejectedInput(_) => 9,
            Error::UndefinedCorrelation(_) => 10,
            Error::Policy(_) => 11,
            Error::Unsupported(_) => 12,
            Error::OutputExists(_) => 13,
            Error::Json(_) => 14,
        }
    }
}

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Contract(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::RejectedInput(format!(
            "{what}: non-finite value {} at position {i}",
            values[i]
        ))),
        None => Ok(()),
    }
}
