use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("duplicate attribute name `{0}`")]
    DuplicateAttribute(String),
    #[error("categorical attribute `{0}` must have cardinality >= 1")]
    ZeroCardinality(String),
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("attribute `{name}` value {value} at row {row} is not -1 or an integer in [0, {cardinality})")]
    CategoricalRange {
        name: String,
        row: usize,
        value: f64,
        cardinality: usize,
    },
    #[error("class id {id} out of range [0, {classes})")]
    ClassRange { id: i64, classes: usize },
    #[error("missing attribute `{0}`")]
    MissingAttribute(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid calibration: {0}")]
    Calibration(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("scene generation failed: {0}")]
    Generation(String),
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
