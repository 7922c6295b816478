//! Training plumbing: an episode-segmented replay buffer, the exploration
//! and fine-tuning loop around the world model, ensemble and actor-critic,
//! single-file checkpoints, and the flat key/value run configuration.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod metrics;
pub mod replay;
pub mod trainer;

pub use checkpoint::{
    from_archive, load_checkpoint, load_checkpoint_with, parameter_blocks, save_checkpoint, to_archive, Archive,
    Block, Dtype, MAGIC, VERSION,
};
pub use config::{Config, TrainConfig};
pub use error::{PipelineError, Result};
pub use metrics::{append_metrics, metrics_csv, IntervalStats, MetricsRow, Phase, METRICS_HEADER};
pub use replay::{obs_batch, Episode, ReplayBuffer, SeqRef, TransitionRecord};
pub use trainer::{
    ensemble_targets, explore_phase, finetune_phase, layout_seed, Counters, FinetuneMode, StepInfo, Trainer,
};
