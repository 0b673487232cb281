use std::path::PathBuf;

use thiserror::Error;

use crate::bilevel::History;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("unknown parameter segment `{0}`")]
    UnknownSegment(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("class {class} has no examples")]
    EmptyClass { class: usize },

    #[error("class {class} is missing from the clean split; increase clean_count")]
    ClassMissingFromClean { class: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("empty {0}")]
    EmptyBatch(&'static str),

    #[error("look-ahead window of {window} steps is already full")]
    WindowFull { window: usize },

    #[error("meta step requested after {done} of {window} look-ahead steps")]
    IncompleteWindow { done: usize, window: usize },

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged {
        step: usize,
        loss: f64,
        history: Box<History>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::UnknownSegment(_) => "unknown_segment",
            Error::NonFinite(_) => "non_finite",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyClass { .. } => "empty_class",
            Error::ClassMissingFromClean { .. } => "class_missing_from_clean",
            Error::Parse { .. } => "parse",
            Error::UnknownLabel(_) => "unknown_label",
            Error::EmptyBatch(_) => "empty_batch",
            Error::WindowFull { .. } => "window_full",
            Error::IncompleteWindow { .. } => "incomplete_window",
            Error::Diverged { .. } => "diverged",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
