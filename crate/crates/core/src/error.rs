use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while reading an embedding bundle.
#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported bundle version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("unsupported dtype {0:?} (expected \"f32le\")")]
    Dtype(String),
    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: u64, found: u64 },
    #[error("manifest lists {meta} meta records but count is {count}")]
    MetaCount { meta: usize, count: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("embedding dimension must be positive")]
    ZeroDim,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Load(#[from] LoadError),

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate input: zero-norm vector for row {id:?}")]
    ZeroNorm { id: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid label set: {0}")]
    InvalidLabels(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("transport error: {message}")]
    Transport {
        status: Option<u16>,
        message: String,
    },

    #[error("replay miss: no cached response for key {key}")]
    ReplayMiss { key: String },

    #[error("no candidate labels could be parsed from the response")]
    EmptyParse,

    #[error("envisioning run {run} failed after {attempts} attempts: {reason}")]
    EnvisionFailed {
        run: usize,
        attempts: usize,
        reason: String,
    },

    #[error("text bundle lacks embeddings for {} label(s): {}", .labels.len(), .labels.join(", "))]
    MissingLabels { labels: Vec<String> },

    #[error("misaligned run tables: {0}")]
    Misaligned(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 config, 3 transport, 4 data.
    pub fn exit_code(&self) -> u8 {
        match self.root() {
            Error::InvalidConfig(_) | Error::InvalidLabels(_) => 2,
            Error::Transport { .. } | Error::ReplayMiss { .. } | Error::EnvisionFailed { .. } => 3,
            _ => 4,
        }
    }
}
