use curio_diffcore::DiffError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("misaligned sequence: {0}")]
    Misaligned(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
