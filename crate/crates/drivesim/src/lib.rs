//! Desk-scale driving world: closed-loop single-lane tracks with static
//! obstacle vehicles, a kinematic bicycle ego, egocentric semantic
//! observations and the episode-ending events used for evaluation.

pub mod config;
pub mod env;
pub mod error;
pub mod events;
pub mod layout;
pub mod render;
pub mod vehicle;

pub use config::EnvConfig;
pub use env::{reset, DriveEnv, EgoObservation, EnvSnapshot, Frame, StepOutcome, ONEHOT_DIM, STACK};
pub use error::SimError;
pub use events::{
    all_task_rewards, detect_events, detect_events_at, extrinsic_reward, heading_error, Event, EventHistory, EventSet,
    Task, TaskRewards,
};
pub use layout::{LayoutId, Obstacle, PathPoint, TrackLayout};
pub use render::{render_semantic, CELLS, GRID, NUM_CLASSES};
pub use vehicle::{step_dynamics, wrap_angle, VehicleState};
