use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{begin}, {end}): end must exceed begin")]
    InvalidInterval { begin: i64, end: i64 },

    #[error("interval [{begin}, {end}) has no frames inside [0, {num_frames})")]
    EmptyAfterClamp { begin: i64, end: i64, num_frames: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("no positive proposals available for a training batch")]
    NoPositives,

    #[error("no negative proposals available for a training batch")]
    NoNegatives,

    #[error("no background proposals available for a classifier batch")]
    NoBackground,

    #[error("no foreground proposals available for a classifier batch")]
    NoForeground,

    #[error("segment [{begin}, {end}) contains no frames of the video")]
    EmptySegment { begin: i64, end: i64 },

    #[error("no ground-truth intervals to evaluate against")]
    NoGroundTruth,

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file: {0}")]
    TruncatedFile(String),

    #[error("dimension overflow: {0}")]
    DimOverflow(String),

    #[error("{path}: {source}")]
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

    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Validation(_) | Error::InvalidInterval { .. } | Error::EmptyAfterClamp { .. } => "validation",
            Error::BadMagic { .. } | Error::UnsupportedVersion(_) | Error::TruncatedFile(_) | Error::DimOverflow(_) => {
                "format"
            }
            Error::Io { .. } => "io",
            Error::NoPositives
            | Error::NoNegatives
            | Error::NoBackground
            | Error::NoForeground
            | Error::EmptySegment { .. }
            | Error::NoGroundTruth
            | Error::DimensionMismatch(_) => "data",
            Error::Shape(_) | Error::State(_) => "internal",
        }
    }

    /// Broken internal invariant rather than bad input.
    pub fn is_internal(&self) -> bool {
        self.category() == "internal"
    }
}
