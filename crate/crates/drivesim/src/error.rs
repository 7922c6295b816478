use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("layout file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown layout `{0}` (expected a or b)")]
    UnknownLayout(String),
    #[error("unknown task `{0}` (expected lf, ca or lf_ca)")]
    UnknownTask(String),
    #[error("io: {0}")]
    Io(String),
}
