use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use curio_agent::ActorCriticStats;
use curio_drivesim::Task;
use curio_rssm::ModelLossBreakdown;

use crate::error::{PipelineError, Result};

pub const METRICS_HEADER: &str = "step,phase,task,loss_total,loss_recon,loss_reward,kl_raw,kl_used,loss_cont,loss_ensemble,r_int_mean,r_ext_mean,actor_loss,critic_loss,entropy";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Explore,
    Finetune,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Explore => "explore",
            Phase::Finetune => "finetune",
        }
    }
}

/// One logging interval, averaged. Loss columns are NaN when no update ran.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub phase: Phase,
    pub task: Task,
    /// `loss_total … loss_ensemble, r_int_mean, r_ext_mean, actor_loss, critic_loss, entropy`.
    pub values: [f64; 12],
}

impl MetricsRow {
    pub fn r_int_mean(&self) -> f64 {
        self.values[7]
    }

    pub fn r_ext_mean(&self) -> f64 {
        self.values[8]
    }

    pub fn csv_line(&self) -> String {
        let mut s = format!("{},{},{}", self.step, self.phase.as_str(), self.task.as_str());
        for v in &self.values {
            let _ = write!(s, ",{v:?}");
        }
        s
    }
}

/// Running sums since the last row.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalStats {
    /// Sums of the update-side columns, in row order minus the reward means.
    pub update_sums: [f64; 10],
    pub updates: u64,
    pub r_int_sum: f64,
    pub r_ext_sum: f64,
    pub steps: u64,
}

impl IntervalStats {
    pub fn record_step(&mut self, r_int: f64, r_ext: f64) {
        self.r_int_sum += r_int;
        self.r_ext_sum += r_ext;
        self.steps += 1;
    }

    pub fn record_update(&mut self, model: &ModelLossBreakdown, ensemble_loss: f64, ac: &ActorCriticStats) {
        let vals = [
            model.total,
            model.recon_nll,
            model.reward_nll,
            model.kl_raw,
            model.kl_used,
            model.continuation_nll,
            ensemble_loss,
            ac.actor_loss,
            ac.critic_loss,
            ac.entropy,
        ];
        for (s, v) in self.update_sums.iter_mut().zip(vals) {
            *s += v;
        }
        self.updates += 1;
    }

    /// Emits the interval's row and clears the sums.
    pub fn flush(&mut self, step: u64, phase: Phase, task: Task) -> MetricsRow {
        let u = |i: usize| {
            if self.updates == 0 {
                f64::NAN
            } else {
                self.update_sums[i] / self.updates as f64
            }
        };
        let per_step = |s: f64| if self.steps == 0 { f64::NAN } else { s / self.steps as f64 };
        let values = [
            u(0),
            u(1),
            u(2),
            u(3),
            u(4),
            u(5),
            u(6),
            per_step(self.r_int_sum),
            per_step(self.r_ext_sum),
            u(7),
            u(8),
            u(9),
        ];
        *self = IntervalStats::default();
        MetricsRow {
            step,
            phase,
            task,
            values,
        }
    }
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}

/// Appends rows to `path`, writing the header first if the file is new or empty.
pub fn append_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| PipelineError::io(path, e))?;
    let fresh = file.metadata().map_err(|e| PipelineError::io(path, e))?.len() == 0;
    let mut text = String::new();
    if fresh {
        text.push_str(METRICS_HEADER);
        text.push('\n');
    }
    for r in rows {
        text.push_str(&r.csv_line());
        text.push('\n');
    }
    file.write_all(text.as_bytes()).map_err(|e| PipelineError::io(path, e))
}
