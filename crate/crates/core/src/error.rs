//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by dataset and checkpoint codecs.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("truncated file")]
    Truncated,
    #[error("payload checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed payload: {0}")]
    Malformed(String),
}

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error("frame violation: {0}")]
    FrameViolation(String),
    #[error("insufficient foreground mass: {0} pixels")]
    InsufficientMass(usize),
    #[error("ambiguous orientation: marker offset {0:.4} px")]
    AmbiguousOrientation(f64),
    #[error("exemplar buffer is empty")]
    EmptyBuffer,
    #[error("buffer holds {0} classes, need at least 2")]
    TooFewClasses(usize),
    #[error("class {0} already present")]
    DuplicateClass(u32),
    #[error("class {0} not present")]
    MissingClass(u32),
    #[error("ground truth contains a single class")]
    SingleClassGroundTruth,
    #[error("format error: {0}")]
    Format(#[from] FormatError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::DegenerateShape(msg.into())
    }

    /// Process exit code for the CLI: 2 config, 3 data format, 4 runtime.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) => 2,
            Error::Format(_) | Error::Io(_) => 3,
            _ => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
