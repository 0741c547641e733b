use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong between reading alignments and writing a report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: non-positive duration {duration}")]
    NonPositiveDuration { line: usize, duration: f64 },

    #[error("unknown phone symbol `{0}`")]
    UnknownPhone(String),

    #[error("invalid phone label `{label}`: {msg}")]
    InvalidLabel { label: String, msg: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("segments reference speakers missing from the manifest: {}", .0.join(", "))]
    UnknownSpeakers(Vec<String>),

    #[error("utterance {utterance}: segments overlap by {overlap:.4} s at {start:.2} s")]
    Overlap {
        utterance: String,
        start: f64,
        overlap: f64,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("phone inventory is empty after filtering")]
    EmptyInventory,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("mixed age units across speakers")]
    MixedAgeUnits,

    #[error("not enough speakers: need at least {needed}, have {have}")]
    TooFewSpeakers { needed: usize, have: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("model document version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad settings rather than bad data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Unsupported(_) | Error::TooFewSpeakers { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
