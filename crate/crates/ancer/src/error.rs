use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected dimension {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("class index {index} out of range for {num_classes} classes")]
    ClassOutOfRange { index: usize, num_classes: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("smoothing kind mismatch: expected {expected}, got {got}")]
    SpecKind {
        expected: &'static str,
        got: &'static str,
    },

    #[error("dimension {0} too large for this operation")]
    UnsupportedDimension(usize),

    #[error("{metric} is undefined on an empty report")]
    UndefinedMetric { metric: &'static str },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn stage(stage: &'static str, source: Error) -> Self {
        Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Process exit code: 2 config error, 3 data error, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_)
            | Error::Parse { .. }
            | Error::InvalidInput(_)
            | Error::ShapeMismatch { .. }
            | Error::UndefinedMetric { .. } => 3,
            Error::Domain(_)
            | Error::ClassOutOfRange { .. }
            | Error::SpecKind { .. }
            | Error::UnsupportedDimension(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
