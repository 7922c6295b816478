use std::fmt::Write as _;

use curio_drivesim::{Event, LayoutId, Task};

pub const REPORT_HEADER: &str = "task,layout,seed,episodes,sr,ir,n_collision,n_offroad,n_wrongdir,n_stall,n_completed";

/// Outcome of one evaluation episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub task: Task,
    pub layout: LayoutId,
    /// Reset seed of this episode.
    pub seed: u64,
    pub steps: usize,
    /// Highest-priority event of the terminal step.
    pub reason: Event,
    /// Every event flagged on the terminal step, indexed like [`Event::ALL`].
    pub events: [u32; 5],
    /// Undiscounted extrinsic return for `task`.
    pub return_ext: f64,
}

/// Success and infraction rates over a set of episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub layout: LayoutId,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    /// Percent of episodes that ran to completion.
    pub sr: f64,
    /// `100 − sr`: every other termination is an infraction, stalls included.
    pub ir: f64,
    /// Episodes per termination reason, indexed like [`Event::ALL`].
    pub breakdown: [usize; 5],
    pub total_steps: usize,
}

impl EvalReport {
    pub fn from_episodes(task: Task, layout: LayoutId, seed: u64, episodes: Vec<EpisodeRecord>) -> Self {
        let mut breakdown = [0usize; 5];
        for e in &episodes {
            breakdown[e.reason as usize] += 1;
        }
        let completed = breakdown[Event::Completed as usize];
        let (sr, ir) = rates(completed, episodes.len());
        let total_steps = episodes.iter().map(|e| e.steps).sum();
        Self {
            task,
            layout,
            seed,
            episodes,
            sr,
            ir,
            breakdown,
            total_steps,
        }
    }

    pub fn completed(&self) -> usize {
        self.breakdown[Event::Completed as usize]
    }

    /// `SR / IR` with two decimals, e.g. `64.52 / 35.48`.
    pub fn summary(&self) -> String {
        format!(
            "{} on layout {} (seed {}): SR {:.2} / IR {:.2} over {} episodes, {} steps",
            self.task,
            self.layout,
            self.seed,
            self.sr,
            self.ir,
            self.episodes.len(),
            self.total_steps
        )
    }

    pub fn csv_line(&self) -> String {
        let b = &self.breakdown;
        let ix = |e: Event| b[e as usize];
        format!(
            "{},{},{},{},{:.2},{:.2},{},{},{},{},{}",
            self.task,
            self.layout,
            self.seed,
            self.episodes.len(),
            self.sr,
            self.ir,
            ix(Event::Collision),
            ix(Event::OffRoad),
            ix(Event::WrongDirection),
            ix(Event::Stall),
            ix(Event::Completed)
        )
    }
}

/// `(SR, IR)` in percent. IR is formed as `100 − SR`, which makes the pair
/// sum to exactly `100.0` in binary floating point for any SR in `[0, 100]`.
/// An empty episode list counts as no success.
pub fn rates(completed: usize, episodes: usize) -> (f64, f64) {
    let sr = if episodes == 0 {
        0.0
    } else {
        100.0 * completed as f64 / episodes as f64
    };
    (sr, 100.0 - sr)
}

pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(out, "{}", r.csv_line());
    }
    out
}
