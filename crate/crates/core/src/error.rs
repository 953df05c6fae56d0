use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}: field `{field}`: {message}")]
    Record {
        file: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate document id `{0}`")]
    DuplicateId(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("inconsistent feature families across documents; offending ids: {}", .0.join(", "))]
    InconsistentFamilies(Vec<String>),

    #[error("evaluation group {0} has no members")]
    EmptyGroup(usize),

    #[error("missing artifact {path}; run the `{stage}` stage first")]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("configuration is invalid:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit status for this error class: 2 validation, 3 data, 4 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Internal(_) => 4,
            _ => 3,
        }
    }
}
