use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate code {0}")]
    DuplicateCode(String),

    #[error("duplicate document id {0}")]
    DuplicateId(String),

    #[error("line {line}: unknown code {code}")]
    UnknownCode { line: usize, code: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("id alignment failed: missing {missing:?}, unexpected {extra:?}")]
    Alignment {
        missing: Vec<String>,
        extra: Vec<String>,
    },

    #[error("empty vocabulary: {0}")]
    EmptyVocabulary(String),

    #[error("training diverged (non-finite loss) at batch {batch}")]
    Divergence { batch: usize },

    #[error("all {0} trials failed")]
    AllTrialsFailed(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidParameter(_) => ErrorKind::Config,
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::DuplicateCode(_)
            | Error::DuplicateId(_)
            | Error::UnknownCode { .. }
            | Error::Format(_)
            | Error::Alignment { .. }
            | Error::MissingArtifact(_)
            | Error::Json(_)
            | Error::Csv(_) => ErrorKind::Data,
            Error::DimensionMismatch { .. }
            | Error::EmptyVocabulary(_)
            | Error::Divergence { .. }
            | Error::AllTrialsFailed(_) => ErrorKind::Runtime,
            Error::Stage { source, .. } => source.kind(),
        }
    }
}
