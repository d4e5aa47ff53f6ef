use std::path::PathBuf;

/// Errors produced by the pipeline library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid date {0:?}: {1}")]
    Date(String, &'static str),

    #[error("unknown action code {0}")]
    ActionCode(i64),

    #[error("day {0} is outside the 04-15..08-15 window")]
    DayOutOfWindow(i64),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid training data: {0}")]
    Training(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("blend group {0:?} has degenerate labels (all one class)")]
    DegenerateLabels(String),

    #[error("missing input for stage {stage}: {path}")]
    MissingInput { stage: String, path: PathBuf },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
