use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value out of domain: {0}")]
    Domain(String),

    /// An input violated a documented precondition of the callee.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("conic solver failed: {0}")]
    Solver(String),

    /// A linear system that should be positive definite could not be solved.
    #[error("singular system: {0}")]
    Singular(String),

    #[error("degenerate precoder column for user {user}")]
    DegenerateColumn { user: usize },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for exit codes and machine-readable reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Domain,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Domain => "domain",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::Parse { .. } => ErrorCategory::Config,
            Error::Dimension(_) | Error::Domain(_) | Error::Contract(_) => ErrorCategory::Domain,
            Error::Solver(_) | Error::Singular(_) | Error::DegenerateColumn { .. } => {
                ErrorCategory::Numerical
            }
            Error::Io { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
