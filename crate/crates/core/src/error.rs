use std::io;

/// Errors produced by every module of the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("integrity error for qa `{id}`: {message}")]
    Integrity { id: String, message: String },

    #[error("duplicate qa id `{0}`")]
    DuplicateId(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no match: {0}")]
    NoMatch(String),

    #[error("token `{0}` is not covered by the permutation table")]
    Coverage(String),

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("sentence {sentence}: {message}")]
    Structure { sentence: usize, message: String },

    #[error("alignment error in {location}: {message}")]
    Alignment { location: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Integrity { .. } => "integrity",
            Error::DuplicateId(_) => "duplicate_id",
            Error::Argument(_) => "argument",
            Error::NoMatch(_) => "no_match",
            Error::Coverage(_) => "coverage",
            Error::Line { .. } => "line",
            Error::Structure { .. } => "structure",
            Error::Alignment { .. } => "alignment",
            Error::Format(_) => "format",
            Error::Manifest(_) => "manifest",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
