//! Recurrent state-space world model: an observation encoder, a gated
//! recurrent core, a transition prior over a diagonal-Gaussian latent, and
//! decoder / reward / continuation heads trained jointly by filtering over
//! replayed sequences.

pub mod config;
pub mod error;
pub mod model;
pub mod obs;
pub mod observe;

pub use config::ModelConfig;
pub use error::{ModelError, Result};
pub use model::{BoundWorldModel, WorldModel, STD_FLOOR};
pub use obs::ObsBatch;
pub use observe::{
    continuation_nll, draw_noise, observe_sequence, reward_nll, LatentState, ModelLossBreakdown, Observed,
    PosteriorStates, SequenceBatch,
};
