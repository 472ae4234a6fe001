use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input. `line` and `column` are 1-based when known.
    #[error("parse error in {origin} at line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse {
        origin: String,
        line: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("missing artifact from stage `{stage}`: {detail}")]
    MissingArtifact { stage: String, detail: String },

    #[error("stale artifact from stage `{stage}`: built with a different configuration, rerun `{stage}`")]
    StaleArtifact { stage: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        origin: impl Into<String>,
        line: usize,
        column: Option<usize>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            column,
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's input or configuration.
    /// I/O failures other than missing or unreadable paths are not.
    pub fn is_input_error(&self) -> bool {
        use std::io::ErrorKind;
        match self {
            Error::Io { source, .. } => matches!(
                source.kind(),
                ErrorKind::NotFound | ErrorKind::PermissionDenied | ErrorKind::InvalidData | ErrorKind::IsADirectory
            ),
            _ => true,
        }
    }
}
