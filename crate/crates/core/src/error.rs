use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("empty manifest")]
    EmptyManifest,

    #[error("duplicate id {0:?}")]
    DuplicateId(String),

    #[error("manifest line {line}: {msg}")]
    ManifestFormat { line: usize, msg: String },

    #[error("label {label} out of range for {classes} classes (segment {id:?})")]
    LabelOutOfRange { id: String, label: usize, classes: usize },

    #[error("unreadable frame directory {0}")]
    FrameDir(PathBuf),

    #[error("class {class} has {count} segments, need at least 2")]
    ClassTooSmall { class: usize, count: usize },

    #[error("corrupt cache: {0}")]
    CorruptCache(String),

    #[error("cache version mismatch: found {0:?}")]
    VersionMismatch([u8; 4]),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("frame size mismatch: {0:?} vs {1:?}")]
    SizeMismatch((usize, usize), (usize, usize)),

    #[error("zero-mass frames")]
    ZeroMassFrames,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("decode error in {path}: {msg}")]
    Decode { path: PathBuf, msg: String },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("segment {id:?}: {source}")]
    Segment {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} trials failed")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
