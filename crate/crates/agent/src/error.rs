use curio_diffcore::DiffError;
use curio_ensemble::EnsembleError;
use curio_rssm::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("mixing weight {0} outside [0, 1]")]
    Alpha(f64),
    #[error("imagination horizon must be at least 1")]
    Horizon,
    #[error("misaligned inputs: {0}")]
    Misaligned(String),
}

pub type Result<T> = std::result::Result<T, AgentError>;
