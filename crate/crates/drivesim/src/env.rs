use std::sync::Arc;

use crate::config::EnvConfig;
use crate::events::{all_task_rewards, detect_events_at, Event, EventHistory, EventSet, TaskRewards};
use crate::layout::{PathPoint, TrackLayout};
use crate::render::{render_semantic, CELLS, NUM_CLASSES};
use crate::vehicle::{step_dynamics, VehicleState};

pub const STACK: usize = 4;

/// One rendered class-id grid, shared between stacked observations.
pub type Frame = Arc<[u8]>;

/// Four stacked semantic frames (oldest first) plus the scalar channels.
#[derive(Clone, Debug, PartialEq)]
pub struct EgoObservation {
    pub frames: [Frame; STACK],
    /// `speed / v_max`, in `[0, 1]`.
    pub speed_norm: f64,
    pub prev_steer: f64,
}

impl EgoObservation {
    pub fn newest(&self) -> &[u8] {
        &self.frames[STACK - 1]
    }

    /// Active positions of the one-hot encoding, laid out as
    /// `(frame · CELLS + cell) · NUM_CLASSES + class`.
    pub fn onehot_indices(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(STACK * CELLS);
        self.extend_onehot(&mut out);
        out
    }

    pub fn extend_onehot(&self, out: &mut Vec<u32>) {
        for (f, frame) in self.frames.iter().enumerate() {
            for (c, &class) in frame.iter().enumerate() {
                out.push(((f * CELLS + c) * NUM_CLASSES + class as usize) as u32);
            }
        }
    }

    pub fn scalars(&self) -> [f64; 2] {
        [self.speed_norm, self.prev_steer]
    }
}

/// Width of the one-hot observation vector.
pub const ONEHOT_DIM: usize = STACK * CELLS * NUM_CLASSES;

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: EgoObservation,
    pub rewards: TaskRewards,
    pub events: EventSet,
    pub terminated: bool,
    pub reason: Option<Event>,
}

/// Full mutable state of a [`DriveEnv`], for checkpointing.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvSnapshot {
    pub layout: TrackLayout,
    pub state: VehicleState,
    pub history: EventHistory,
    pub t: usize,
    pub frames: Vec<Frame>,
    pub prev_steer: f64,
    pub done: bool,
}

/// Spawn pose for `seed` and the initial observation (first frame repeated).
pub fn reset(layout: &TrackLayout, seed: u64, cfg: &EnvConfig) -> (VehicleState, EgoObservation) {
    let state = layout.spawns[(seed % layout.spawns.len() as u64) as usize];
    let frame: Frame = render_semantic(&state, layout).into();
    let obs = EgoObservation {
        frames: std::array::from_fn(|_| Arc::clone(&frame)),
        speed_norm: state.speed / cfg.v_max,
        prev_steer: 0.0,
    };
    (state, obs)
}

#[derive(Clone, Debug)]
pub struct DriveEnv {
    layout: TrackLayout,
    cfg: EnvConfig,
    state: VehicleState,
    history: EventHistory,
    path: PathPoint,
    t: usize,
    frames: [Frame; STACK],
    prev_steer: f64,
    done: bool,
}

impl DriveEnv {
    pub fn new(layout: TrackLayout, cfg: EnvConfig) -> Self {
        let (state, obs) = reset(&layout, 0, &cfg);
        let path = layout.project(state.x, state.y);
        Self {
            layout,
            cfg,
            state,
            history: EventHistory::default(),
            path,
            t: 0,
            frames: obs.frames,
            prev_steer: 0.0,
            done: false,
        }
    }

    pub fn reset(&mut self, seed: u64) -> EgoObservation {
        let (state, obs) = reset(&self.layout, seed, &self.cfg);
        self.state = state;
        self.path = self.layout.project(state.x, state.y);
        self.history = EventHistory::default();
        self.t = 0;
        self.frames = obs.frames.clone();
        self.prev_steer = 0.0;
        self.done = false;
        obs
    }

    /// Replaces the layout; the next [`DriveEnv::reset`] spawns on it.
    pub fn set_layout(&mut self, layout: TrackLayout) {
        self.layout = layout;
        self.done = true;
    }

    pub fn layout(&self) -> &TrackLayout {
        &self.layout
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self) -> EgoObservation {
        EgoObservation {
            frames: self.frames.clone(),
            speed_norm: self.state.speed / self.cfg.v_max,
            prev_steer: self.prev_steer,
        }
    }

    pub fn step(&mut self, action: [f64; 2]) -> StepOutcome {
        let action = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let before = self.path;
        self.state = step_dynamics(&self.state, action, &self.cfg);
        self.t += 1;
        self.path = self.layout.project(self.state.x, self.state.y);
        let events = detect_events_at(
            &self.state,
            &self.path,
            &mut self.history,
            &self.layout,
            &self.cfg,
            self.t,
        );
        let rewards = all_task_rewards(&self.state, &before, &self.path, events, &self.layout, &self.cfg);
        let frame: Frame = render_semantic(&self.state, &self.layout).into();
        self.frames.rotate_left(1);
        self.frames[STACK - 1] = frame;
        self.prev_steer = action[0];
        self.done = !events.is_empty();
        StepOutcome {
            obs: self.observation(),
            rewards,
            events,
            terminated: self.done,
            reason: events.reason(),
        }
    }

    pub fn snapshot(&self) -> EnvSnapshot {
        EnvSnapshot {
            layout: self.layout.clone(),
            state: self.state,
            history: self.history,
            t: self.t,
            frames: self.frames.to_vec(),
            prev_steer: self.prev_steer,
            done: self.done,
        }
    }

    pub fn restore(snap: EnvSnapshot, cfg: EnvConfig) -> Self {
        let path = snap.layout.project(snap.state.x, snap.state.y);
        let frames: [Frame; STACK] = std::array::from_fn(|i| Arc::clone(&snap.frames[i]));
        Self {
            layout: snap.layout,
            cfg,
            state: snap.state,
            history: snap.history,
            path,
            t: snap.t,
            frames,
            prev_steer: snap.prev_steer,
            done: snap.done,
        }
    }
}
