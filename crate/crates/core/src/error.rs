use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Error taxonomy for the whole pipeline. `Parse` and `Config` indicate bad
/// input and map to CLI exit code 1; everything else is a stage failure and
/// maps to exit code 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },

    #[error("remote endpoint error: status {status}: {body}")]
    Remote { status: u16, body: String },

    #[error("remote request failed after {attempts} attempts: {message}")]
    RemoteExhausted { attempts: u32, message: String },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn stage(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed user input rather than a failure
    /// while doing work.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Parse { .. } | Error::Config(_))
    }
}
