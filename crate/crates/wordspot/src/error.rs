use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("empty line")]
    EmptyLine,
    #[error("empty glyph")]
    EmptyGlyph,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sequence too short")]
    SequenceTooShort,
    #[error("unknown label: {0}")]
    UnknownLabel(String),
    #[error("no translation for '{word}' into {script}")]
    NoTranslation { word: String, script: String },
    #[error("translation provider failed: {0}")]
    TranslationProvider(String),
    #[error("zone segmentation not applicable to script {0}")]
    ZoneNotApplicable(String),
    #[error("empty model set")]
    EmptyModelSet,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("archive version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("manifest error at line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
