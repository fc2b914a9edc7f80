use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bad shape: {0}")]
    BadShape(String),

    #[error("matrix is singular or too ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("iteration did not converge after {iterations} steps")]
    NoConverge { iterations: usize },

    #[error("Newton-Schulz residual grew from {before:.3e} to {after:.3e}")]
    Diverged { before: f64, after: f64 },

    #[error("non-finite value encountered {context}")]
    NonFinite { context: String },

    #[error("corrupt file at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("{context}: {source}")]
    Iteration {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error{}: {source}", path.as_ref().map(|p| format!(" on {}", p.display())).unwrap_or_default())]
    Io {
        path: Option<PathBuf>,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::BadShape(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: Some(path.into()),
            source,
        }
    }

    /// Wraps an error with a location such as `iteration 7` or `scale 1 patch (0, 2)`.
    pub fn at(self, context: impl Into<String>) -> Self {
        Error::Iteration {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// Short machine-readable tag used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::BadShape(_) => "bad_shape",
            Error::Singular { .. } => "singular",
            Error::NoConverge { .. } => "no_converge",
            Error::Diverged { .. } => "diverged",
            Error::NonFinite { .. } => "non_finite",
            Error::Corrupt { .. } => "corrupt",
            Error::Config(_) => "config",
            Error::CheckFailed(_) => "check_failed",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Iteration { .. } => unreachable!(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { path: None, source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
