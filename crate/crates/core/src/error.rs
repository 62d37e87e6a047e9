use std::path::PathBuf;

/// Errors raised by every toolkit operation.
///
/// The variants map onto process exit codes: data problems exit with 2,
/// configuration and usage problems with 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("data error at {path}:{line}: {message}")]
    DataAt {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("config error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn at_line(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::DataAt {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Same error class with `prefix` prepended to the message.
    pub fn context(self, prefix: &str) -> Self {
        match self {
            Error::Io { path, source } => Error::Io {
                path,
                source: std::io::Error::new(source.kind(), format!("{prefix}: {source}")),
            },
            Error::Data(m) => Error::Data(format!("{prefix}: {m}")),
            Error::DataAt { path, line, message } => Error::DataAt {
                path,
                line,
                message: format!("{prefix}: {message}"),
            },
            Error::Config(m) => Error::Config(format!("{prefix}: {m}")),
            Error::Usage(m) => Error::Usage(format!("{prefix}: {m}")),
        }
    }

    /// Process exit code for this error: 2 for data errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data(_) | Error::DataAt { .. } | Error::Io { .. } => 2,
            Error::Config(_) | Error::Usage(_) => 1,
        }
    }
}
