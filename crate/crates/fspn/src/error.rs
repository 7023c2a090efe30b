//! Crate-wide error type.

use crate::model::validate::ValidationReport;
use std::fmt;

/// Errors surfaced by library operations.
#[derive(Debug)]
pub enum FspnError {
    /// I/O failure, annotated with the path involved.
    Io { path: String, message: String },
    /// Malformed textual input (CSV cell, query token, BN section, ...).
    Parse { context: String, message: String },
    /// Model file with a `format_version` this build does not understand.
    UnsupportedVersion(u64),
    /// A model failed structural validation.
    Invalid(ValidationReport),
    /// Dataset-level problem (ragged rows, column mismatch, empty data, ...).
    Data(String),
    /// Model-level problem detected at evaluation time (NaN leaf, bad node placement).
    Model(String),
    /// Conditioning event has (numerically) zero probability.
    ZeroMassEvidence,
    /// A joint lattice exceeds the enumerable limit.
    LatticeTooLarge { size: u128, limit: u64 },
    /// Bad arguments to an operation or the CLI.
    Usage(String),
}

impl fmt::Display for FspnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, message } => write!(f, "io error on {path}: {message}"),
            Self::Parse { context, message } => write!(f, "parse error ({context}): {message}"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported format version {v}"),
            Self::Invalid(report) => write!(f, "model validation failed:\n{report}"),
            Self::Data(msg) => write!(f, "data error: {msg}"),
            Self::Model(msg) => write!(f, "model error: {msg}"),
            Self::ZeroMassEvidence => write!(f, "evidence has zero mass"),
            Self::LatticeTooLarge { size, limit } => {
                write!(f, "joint lattice has {size} states, limit is {limit}")
            }
            Self::Usage(msg) => write!(f, "usage error: {msg}"),
        }
    }
}

impl std::error::Error for FspnError {}

impl FspnError {
    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, FspnError>;
