use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("population table {path}: {reason}")]
    InvalidPopulation { path: String, reason: String },

    #[error("weight config {path}: {reason}")]
    InvalidWeights { path: String, reason: String },

    #[error("sigma must be positive (got {0})")]
    NonPositiveSigma(f64),

    #[error("delta must be positive (got {0})")]
    NonPositiveDelta(f64),

    #[error("program {0} needs a weight config")]
    MissingWeights(String),

    #[error("unobservable output {0}: p(O = v) is zero")]
    UnobservableOutput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot read config {path}: {source}")]
    UnreadableConfig {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the CLI: 1 config, 2 invariant, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invariant(_) => 2,
            Error::Io { .. } => 3,
            _ => 1,
        }
    }
}
