use std::path::PathBuf;

/// Broad failure classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Protocol,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate {what} `{id}`")]
    Duplicate { what: &'static str, id: String },

    #[error("label `{label}` has {count} authors, fewer than the {required} required")]
    UnderRepresented {
        label: String,
        count: usize,
        required: usize,
    },

    #[error("chunk `{chunk_id}` belongs to partition `{partition}`, expected `{expected}`")]
    Partition {
        chunk_id: String,
        partition: String,
        expected: String,
    },

    #[error("invalid record: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("component not fitted: {0}")]
    NotFitted(&'static str),

    #[error("join failed, {} chunk ids missing: {}", .missing.len(), .missing.join(", "))]
    Join { missing: Vec<String> },

    #[error("label mismatch for `{chunk_id}`: chunk store says `{expected}`, record says `{found}`")]
    LabelMismatch {
        chunk_id: String,
        expected: String,
        found: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },

    #[error("offline mode: no cached response for request {key}")]
    CacheMiss { key: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Json(_) => ErrorClass::Io,
            Error::Parse { .. } => ErrorClass::Io,
            Error::Numeric(_) | Error::Shape(_) => ErrorClass::Numeric,
            Error::Protocol(_)
            | Error::Transport { .. }
            | Error::CacheMiss { .. }
            | Error::Join { .. }
            | Error::LabelMismatch { .. }
            | Error::Partition { .. } => ErrorClass::Protocol,
            Error::Duplicate { .. }
            | Error::UnderRepresented { .. }
            | Error::Validation(_)
            | Error::Config(_)
            | Error::NotFitted(_) => ErrorClass::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
