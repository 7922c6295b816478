use curio_agent::AgentError;
use curio_diffcore::DiffError;
use curio_drivesim::SimError;
use curio_ensemble::EnsembleError;
use curio_rssm::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("config line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {msg}")]
    ConfigValue { key: String, msg: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("warm-up not met: need an episode of at least {needed} steps, longest stored is {longest}")]
    WarmupNotMet { needed: usize, longest: usize },
    #[error("episode of {len} steps does not fit a buffer of capacity {capacity}")]
    EpisodeTooLong { len: usize, capacity: usize },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint fingerprint {found:016x} does not match config fingerprint {expected:016x}")]
    Fingerprint { expected: u64, found: u64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

impl PipelineError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
