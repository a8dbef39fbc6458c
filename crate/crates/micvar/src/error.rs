//! Application errors and their process exit codes.

use std::path::PathBuf;

use micvar_core::CoreError;

use crate::io::CsvError;

/// Everything the binary can fail with.
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    /// Failure inside the numerical library.
    #[error("{0}")]
    Core(#[from] CoreError),
    /// CSV ingestion or emission failure.
    #[error("{path}: {source}")]
    Csv {
        /// File involved.
        path: PathBuf,
        /// Underlying CSV error.
        source: CsvError,
    },
    /// JSON configuration failure.
    #[error("{path}: {message}")]
    Json {
        /// File involved.
        path: PathBuf,
        /// What went wrong.
        message: String,
    },
    /// File system failure.
    #[error("{path}: {source}")]
    Io {
        /// File involved.
        path: PathBuf,
        /// Underlying IO error.
        source: std::io::Error,
    },
    /// Invalid flag combination or argument value.
    #[error("{0}")]
    BadArgs(String),
}

impl AppError {
    /// Exit code contract: 2 for data and configuration problems, 3 for
    /// numerical failures inside an otherwise valid computation.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    /// Wraps a CSV error with the file it came from.
    pub fn csv(path: impl Into<PathBuf>, source: CsvError) -> Self {
        AppError::Csv {
            path: path.into(),
            source,
        }
    }

    /// Wraps a JSON error with the file it came from.
    pub fn json(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        AppError::Json {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps an IO error with the file it came from.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }
}
