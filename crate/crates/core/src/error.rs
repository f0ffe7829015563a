use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed JSON at byte {offset}: {message}")]
    Json { offset: usize, message: String },

    #[error("case {case_id:?}: missing or invalid field {field:?}")]
    Field { case_id: String, field: String },

    #[error("case {case_id:?} turn {turn}: {message}")]
    Segmentation {
        case_id: String,
        turn: usize,
        message: String,
    },

    #[error("annotation incomplete: {} unlabeled event(s): {}", .offenders.len(), .offenders.join(", "))]
    AnnotationIncomplete { offenders: Vec<String> },

    #[error("schema: {0}")]
    Schema(String),

    #[error("unknown action code {0:?}")]
    UnknownCode(String),

    #[error("unknown {kind} {name:?} (available: {})", .available.join(", "))]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("{0}: empty input")]
    Empty(&'static str),

    #[error("degenerate marginals: expected agreement is 1 but observed agreement is {p_observed}")]
    DegenerateMarginals { p_observed: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("label files do not align: {} unmatched key(s): {}", .keys.len(), .keys.join(", "))]
    UnmatchedKeys { keys: Vec<String> },

    #[error("{path}: {message}")]
    Format { path: String, message: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable short identifier, used for the machine-readable error line of the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Json { .. } => "json",
            Error::Field { .. } => "field",
            Error::Segmentation { .. } => "segmentation",
            Error::AnnotationIncomplete { .. } => "annotation-incomplete",
            Error::Schema(_) => "schema",
            Error::UnknownCode(_) => "unknown-code",
            Error::UnknownStrategy { .. } => "unknown-strategy",
            Error::Empty(_) => "empty",
            Error::DegenerateMarginals { .. } => "degenerate-marginals",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::UnmatchedKeys { .. } => "unmatched-keys",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<String>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
