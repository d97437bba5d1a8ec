use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// The variants are grouped so that a front end can map them onto coarse
/// exit categories: configuration problems, data problems, and training
/// divergence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("label generation failed after {attempts} attempts: every candidate mask was empty")]
    GenerationFailed { attempts: usize },

    #[error("training diverged at step {step}: {reason}")]
    Divergence { step: usize, reason: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("stage `{stage}` failed (seed {seed})")]
    Stage {
        stage: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Divergence,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorKind::Config,
            Error::Divergence { .. } => ErrorKind::Divergence,
            Error::Stage { source, .. } => source.kind(),
            Error::Shape { .. }
            | Error::GenerationFailed { .. }
            | Error::Data(_)
            | Error::Io { .. }
            | Error::Image { .. }
            | Error::Json(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps `self` with the name of the pipeline stage and the seed it ran under.
    pub fn in_stage(self, stage: impl Into<String>, seed: u64) -> Self {
        Error::Stage {
            stage: stage.into(),
            seed,
            source: Box::new(self),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context,
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
