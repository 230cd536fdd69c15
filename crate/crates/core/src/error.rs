use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible mask spec: {0}")]
    InfeasibleSpec(String),

    #[error("infeasible lambda ratio: target {target} rows < {mandatory} mandatory low-frequency rows")]
    InfeasibleRatio { target: usize, mandatory: usize },

    #[error("lambda mask is not a subset of the acquisition mask")]
    MaskViolation,

    #[error("non-finite value in phase {phase}")]
    NumericOverflow { phase: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("tape does not match parameters: {0}")]
    InvalidTape(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: u64, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("acquired data modified for subject {0}")]
    AcquiredDataModified(String),

    #[error("stage {stage} failed on subject {subject}: {source}")]
    Stage {
        stage: usize,
        subject: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 config, 2 I/O, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io { .. } | Error::Format { .. } => 2,
            Error::Stage { source, .. } => source.exit_code(),
            Error::NumericOverflow { .. } | Error::Numeric(_) => 3,
            _ => 3,
        }
    }
}
