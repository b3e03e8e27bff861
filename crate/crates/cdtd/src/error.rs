use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} not found: {}", path.display())]
    NotFound { what: &'static str, path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: invalid JSON: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] cdtd_core::Error),
}

impl Error {
    /// Process exit code: 2 for bad input or usage, 1 for failures at run time.
    pub fn exit_code(&self) -> i32 {
        use cdtd_core::Error as C;
        match self {
            Error::NotFound { .. }
            | Error::Csv { .. }
            | Error::Json { .. }
            | Error::Checkpoint(_)
            | Error::Version { .. }
            | Error::Usage(_) => 2,
            Error::Io { .. } => 1,
            Error::Core(e) => match e {
                C::Schema(_) | C::Data(_) | C::Shape(_) | C::Config(_) => 2,
                C::Domain { .. } | C::UnknownEntity(_) | C::NonFiniteLoss { .. } | C::Diverged { .. } | C::Metric(_) => 1,
            },
        }
    }
}

/// Map an open failure to `NotFound` when the file is missing.
pub(crate) fn open_error(what: &'static str, path: &std::path::Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::NotFound { what, path: path.to_path_buf() }
    } else {
        Error::Io { path: path.to_path_buf(), source: e }
    }
}
