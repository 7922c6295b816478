//! Termination events and task rewards.

use std::fmt;
use std::str::FromStr;

use crate::config::EnvConfig;
use crate::error::SimError;
use crate::layout::{PathPoint, TrackLayout};
use crate::vehicle::VehicleState;

/// Episode-ending events, declared in priority order (highest first).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    Collision,
    OffRoad,
    WrongDirection,
    Stall,
    Completed,
}

impl Event {
    pub const ALL: [Event; 5] = [
        Event::Collision,
        Event::OffRoad,
        Event::WrongDirection,
        Event::Stall,
        Event::Completed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Event::Collision => "collision",
            Event::OffRoad => "off_road",
            Event::WrongDirection => "wrong_direction",
            Event::Stall => "stall",
            Event::Completed => "completed",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct EventSet(u8);

impl EventSet {
    pub fn insert(&mut self, e: Event) {
        self.0 |= e.bit();
    }

    pub fn contains(self, e: Event) -> bool {
        self.0 & e.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// The highest-priority event present.
    pub fn reason(self) -> Option<Event> {
        Event::ALL.into_iter().find(|e| self.contains(*e))
    }

    pub fn iter(self) -> impl Iterator<Item = Event> {
        Event::ALL.into_iter().filter(move |e| self.contains(*e))
    }
}

impl FromIterator<Event> for EventSet {
    fn from_iter<I: IntoIterator<Item = Event>>(iter: I) -> Self {
        let mut s = EventSet::default();
        for e in iter {
            s.insert(e);
        }
        s
    }
}

/// Consecutive-step counters behind the wrong-way and stall events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EventHistory {
    pub wrong_way_steps: usize,
    pub stall_steps: usize,
}

/// Heading error to the local travel direction, in `[0, π]`.
pub fn heading_error(s: &VehicleState, p: &PathPoint) -> f64 {
    crate::vehicle::wrap_angle(s.heading - p.direction).abs()
}

/// Updates the counters in `history` for step `t` and returns the events that fire.
pub fn detect_events(
    s: &VehicleState,
    history: &mut EventHistory,
    layout: &TrackLayout,
    cfg: &EnvConfig,
    t: usize,
) -> EventSet {
    let p = layout.project(s.x, s.y);
    detect_events_at(s, &p, history, layout, cfg, t)
}

/// [`detect_events`] with a precomputed projection.
pub fn detect_events_at(
    s: &VehicleState,
    p: &PathPoint,
    history: &mut EventHistory,
    layout: &TrackLayout,
    cfg: &EnvConfig,
    t: usize,
) -> EventSet {
    let mut ev = EventSet::default();
    if layout
        .obstacles
        .iter()
        .any(|o| (s.x - o.x).hypot(s.y - o.y) < cfg.ego_radius + o.radius)
    {
        ev.insert(Event::Collision);
    }
    if p.lateral.abs() > layout.drivable_half_width() {
        ev.insert(Event::OffRoad);
    }
    if heading_error(s, p) > cfg.wrong_way_angle_deg.to_radians() {
        history.wrong_way_steps += 1;
    } else {
        history.wrong_way_steps = 0;
    }
    if history.wrong_way_steps >= cfg.wrong_way_steps {
        ev.insert(Event::WrongDirection);
    }
    if s.speed < cfg.stall_speed {
        history.stall_steps += 1;
    } else {
        history.stall_steps = 0;
    }
    if history.stall_steps >= cfg.stall_steps {
        ev.insert(Event::Stall);
    }
    if ev.is_empty() && t >= cfg.t_max {
        ev.insert(Event::Completed);
    }
    ev
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    LaneFollow,
    CollisionAvoid,
    LaneFollowAvoid,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::LaneFollow, Task::CollisionAvoid, Task::LaneFollowAvoid];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::LaneFollow => "lf",
            Task::CollisionAvoid => "ca",
            Task::LaneFollowAvoid => "lf_ca",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lf" => Ok(Task::LaneFollow),
            "ca" => Ok(Task::CollisionAvoid),
            "lf_ca" | "lf+ca" => Ok(Task::LaneFollowAvoid),
            other => Err(SimError::UnknownTask(other.to_string())),
        }
    }
}

pub const INFRACTION_PENALTY: f64 = -10.0;
pub const COMPLETION_BONUS: f64 = 10.0;
const PROGRESS_SCALE: f64 = 0.05;

/// Per-task extrinsic rewards for one step, indexed by [`Task::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TaskRewards(pub [f64; 3]);

impl TaskRewards {
    pub fn get(&self, task: Task) -> f64 {
        self.0[task.index()]
    }
}

/// Lane-keeping shaping: speed × heading alignment × lane-centering factor.
fn lane_term(s: &VehicleState, p: &PathPoint, layout: &TrackLayout, cfg: &EnvConfig) -> f64 {
    let centering = (1.0 - p.lateral.abs() / (layout.lane_width / 2.0)).max(0.0);
    (s.speed / cfg.v_max) * heading_error(s, p).cos() * centering
}

/// Extrinsic reward of `task` for arriving at `s` (projection `now`) from projection `before`.
pub fn extrinsic_reward(
    task: Task,
    s: &VehicleState,
    before: &PathPoint,
    now: &PathPoint,
    events: EventSet,
    layout: &TrackLayout,
    cfg: &EnvConfig,
) -> f64 {
    let lf = || {
        let mut r = lane_term(s, now, layout, cfg);
        if events.contains(Event::OffRoad) || events.contains(Event::WrongDirection) {
            r += INFRACTION_PENALTY;
        }
        r
    };
    let ca = || {
        let mut r = PROGRESS_SCALE * layout.progress(before.s, now.s);
        if events.contains(Event::Collision) {
            r += INFRACTION_PENALTY;
        }
        r
    };
    let base = match task {
        Task::LaneFollow => lf(),
        Task::CollisionAvoid => ca(),
        Task::LaneFollowAvoid => lf() + ca(),
    };
    if events.contains(Event::Completed) {
        base + COMPLETION_BONUS
    } else {
        base
    }
}

pub fn all_task_rewards(
    s: &VehicleState,
    before: &PathPoint,
    now: &PathPoint,
    events: EventSet,
    layout: &TrackLayout,
    cfg: &EnvConfig,
) -> TaskRewards {
    TaskRewards(Task::ALL.map(|t| extrinsic_reward(t, s, before, now, events, layout, cfg)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{LayoutId, Obstacle};

    fn layout() -> TrackLayout {
        let mut l = TrackLayout::randomize(LayoutId::A, 4);
        l.obstacles.clear();
        l
    }

    #[test]
    fn quiet_step_has_no_events() {
        let l = layout();
        let cfg = EnvConfig::default();
        let mut s = l.spawns[0];
        s.speed = 5.0;
        let mut h = EventHistory::default();
        assert!(detect_events(&s, &mut h, &l, &cfg, 10).is_empty());
    }

    #[test]
    fn overlapping_obstacle_collides() {
        let mut l = layout();
        let cfg = EnvConfig::default();
        let mut s = l.spawns[0];
        s.speed = 5.0;
        l.obstacles.push(Obstacle {
            x: s.x + 0.5,
            y: s.y,
            radius: 1.0,
        });
        let mut h = EventHistory::default();
        let ev = detect_events(&s, &mut h, &l, &cfg, 3);
        assert_eq!(ev, [Event::Collision].into_iter().collect());
    }

    #[test]
    fn wrong_way_counter_fires_on_twentieth_step() {
        let l = layout();
        let cfg = EnvConfig::default();
        let mut s = l.spawns[0];
        s.speed = 5.0;
        s.heading = crate::vehicle::wrap_angle(s.heading + std::f64::consts::PI);
        let mut h = EventHistory::default();
        for t in 1..=19 {
            assert!(detect_events(&s, &mut h, &l, &cfg, t).is_empty(), "step {t}");
        }
        let ev = detect_events(&s, &mut h, &l, &cfg, 20);
        assert_eq!(ev.reason(), Some(Event::WrongDirection));
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn priority_is_total() {
        let all: EventSet = Event::ALL.into_iter().collect();
        assert_eq!(all.reason(), Some(Event::Collision));
        let s: EventSet = [Event::Stall, Event::OffRoad, Event::WrongDirection].into_iter().collect();
        assert_eq!(s.reason(), Some(Event::OffRoad));
        assert_eq!(EventSet::default().reason(), None);
    }

    #[test]
    fn completion_only_when_clean() {
        let l = layout();
        let cfg = EnvConfig::default();
        let mut s = l.spawns[0];
        s.speed = 5.0;
        let mut h = EventHistory::default();
        let ev = detect_events(&s, &mut h, &l, &cfg, cfg.t_max);
        assert_eq!(ev.reason(), Some(Event::Completed));
        let mut off = s;
        off.x += 50.0;
        let ev = detect_events(&off, &mut h, &l, &cfg, cfg.t_max);
        assert!(!ev.contains(Event::Completed));
    }

    #[test]
    fn lane_follow_reward_cases() {
        let l = layout();
        let cfg = EnvConfig::default();
        let mut s = l.spawns[0];
        s.speed = cfg.v_max;
        let p = l.project(s.x, s.y);
        let r = extrinsic_reward(Task::LaneFollow, &s, &p, &p, EventSet::default(), &l, &cfg);
        assert!((r - 1.0).abs() < 1e-9, "{r}");

        let mut edge = p;
        edge.lateral = l.lane_width / 2.0;
        let at_edge = extrinsic_reward(Task::LaneFollow, &s, &p, &edge, EventSet::default(), &l, &cfg);
        assert_eq!(at_edge, 0.0);
    }

    #[test]
    fn collision_avoid_reward_cases() {
        let l = layout();
        let cfg = EnvConfig::default();
        let s = l.spawns[0];
        let p0 = l.project(s.x, s.y);
        let mut p1 = p0;
        p1.s = (p0.s + 2.0).rem_euclid(l.length());
        let ev: EventSet = [Event::Collision].into_iter().collect();
        let r = extrinsic_reward(Task::CollisionAvoid, &s, &p0, &p1, ev, &l, &cfg);
        assert!((r - (-10.0 + 0.1)).abs() < 1e-9);
        let both = extrinsic_reward(Task::LaneFollowAvoid, &s, &p0, &p1, ev, &l, &cfg);
        let lf = extrinsic_reward(Task::LaneFollow, &s, &p0, &p1, ev, &l, &cfg);
        assert!((both - (lf + r)).abs() < 1e-12);
    }

    #[test]
    fn task_parsing() {
        assert_eq!("lf_ca".parse::<Task>().unwrap(), Task::LaneFollowAvoid);
        assert!(matches!("xx".parse::<Task>(), Err(SimError::UnknownTask(_))));
    }
}
