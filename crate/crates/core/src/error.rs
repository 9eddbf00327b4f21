use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("lexicon error: word `{0}` is not in the toy lexicon")]
    UnknownWord(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("geometry mismatch: {0}")]
    Geometry(String),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Divergence { epoch: usize, msg: String },
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
    #[error("missing data: {0}")]
    Missing(String),
    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownWord(_) => "unknown_word",
            Error::Validation(_) => "validation",
            Error::Degenerate(_) => "degenerate_input",
            Error::UnsupportedFormat(_) => "unsupported_format",
            Error::Parse { .. } => "parse",
            Error::DuplicateId(_) => "duplicate_id",
            Error::TooShort { .. } => "too_short",
            Error::Geometry(_) => "geometry",
            Error::Divergence { .. } => "divergence",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::Missing(_) => "missing",
            Error::NotFound(_) => "not_found",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Wav(_) => "wav",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
