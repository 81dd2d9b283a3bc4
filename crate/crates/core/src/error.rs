use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class. Front ends map these onto exit codes and HTTP
/// statuses, so the set is part of the public interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCategory {
    Usage,
    Parse,
    Validation,
    Io,
    Mismatch,
    Internal,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Parse => "parse",
            ErrorCategory::Validation => "validation",
            ErrorCategory::Io => "io",
            ErrorCategory::Mismatch => "mismatch",
            ErrorCategory::Internal => "internal",
        }
    }
}

impl std::fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid {what}: {message}")]
    Validation { what: &'static str, message: String },

    #[error("malformed feature file: {0}")]
    Format(String),

    #[error("{0}")]
    Mismatch(String),

    #[error("{0}")]
    Usage(String),

    #[error("image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    #[error("method `{method}` failed: {source}")]
    Method {
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Validation {
            what,
            message: message.into(),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Io { .. } | Error::Image { .. } => ErrorCategory::Io,
            Error::Parse { .. } | Error::Format(_) => ErrorCategory::Parse,
            Error::Validation { .. } => ErrorCategory::Validation,
            Error::Mismatch(_) => ErrorCategory::Mismatch,
            Error::Usage(_) => ErrorCategory::Usage,
            Error::Method { source, .. } => source.category(),
            Error::Internal(_) => ErrorCategory::Internal,
        }
    }
}
