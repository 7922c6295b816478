//! Behaviour learning inside the world model: a squashed-Gaussian actor and a
//! value critic trained on λ-returns of imagined rollouts, with gradients
//! flowing through the learned dynamics. Also the reward shaping applied to
//! those rollouts: extrinsic/intrinsic mixing and a steering penalty.

pub mod config;
pub mod error;
pub mod imagine;
pub mod policy;
pub mod returns;
pub mod shaping;
pub mod update;

pub use config::AgentConfig;
pub use error::{AgentError, Result};
pub use imagine::{imagine, ImaginedReward, ImaginedTrajectory, LearnedReward};
pub use policy::{Actor, BoundActor, Critic, STD_MAX, STD_MIN};
pub use returns::{lambda_returns, lambda_returns_tape};
pub use shaping::{mix_rewards, steering_penalty};
pub use update::{ActorCritic, ActorCriticStats};
