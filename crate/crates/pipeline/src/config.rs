//! Run configuration and its flat `section.key = value` text form.
//!
//! ```text
//! # comments run to end of line
//! train.batch = 64
//! train.layout = a
//! ensemble.hidden = 128, 128
//! ```
//!
//! Every field has a default; a file only lists overrides. Unknown keys are
//! an error, as are duplicate keys.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use curio_agent::AgentConfig;
use curio_drivesim::{EnvConfig, LayoutId, Task};
use curio_ensemble::EnsembleConfig;
use curio_rssm::ModelConfig;

use crate::error::{PipelineError, Result};

/// Schedule and optimisation settings of the two training phases.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr_model: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    /// Ensemble size.
    pub k: usize,
    /// Sequences per update.
    pub batch: usize,
    /// Sequence length.
    pub seq_len: usize,
    /// Replay capacity in transitions.
    pub capacity: usize,
    pub gamma: f64,
    /// Intrinsic reward weight while exploring.
    pub alpha_explore: f64,
    /// Intrinsic reward weight while fine-tuning.
    pub alpha_finetune: f64,
    pub n_explore: usize,
    pub n_fine: usize,
    /// Env steps per rollout chunk; the CLI checkpoints at chunk boundaries.
    pub chunk: usize,
    /// Updates per env step.
    pub train_ratio: f64,
    /// Env steps between layout re-randomizations.
    pub randomization_period: usize,
    pub seed: u64,
    /// Env steps collected before the first update.
    pub warmup: usize,
    /// Env steps per metrics row.
    pub log_interval: usize,
    /// Imagination start states per actor-critic update (0 = every posterior state of the batch).
    pub imagine_starts: usize,
    /// Global gradient-norm clip for the world model (0 disables).
    pub grad_clip: f64,
    pub layout: LayoutId,
    /// Task whose extrinsic reward is logged while exploring and optimised while fine-tuning.
    pub task: Task,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_model: 1e-4,
            lr_policy: 1e-4,
            lr_value: 1e-4,
            k: 8,
            batch: 64,
            seq_len: 50,
            capacity: 100_000,
            gamma: 0.99,
            alpha_explore: 1.0,
            alpha_finetune: 0.0,
            n_explore: 30_000,
            n_fine: 3_000,
            chunk: 1_000,
            train_ratio: 0.2,
            randomization_period: 2_000,
            seed: 0,
            warmup: 1_000,
            log_interval: 100,
            imagine_starts: 256,
            grad_clip: 100.0,
            layout: LayoutId::A,
            task: Task::LaneFollow,
        }
    }
}

/// Complete configuration: schedule plus component settings.
///
/// Fields shared between sections live in [`TrainConfig`] only (`gamma`, `k`,
/// the policy/value learning rates and the randomization period) and are
/// copied into the component configs by the accessors below.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub ensemble: EnsembleConfig,
    pub agent: AgentConfig,
    pub env: EnvConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            ensemble: EnsembleConfig::default(),
            agent: AgentConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

enum Slot<'a> {
    F(&'a mut f64),
    U(&'a mut usize),
    Seed(&'a mut u64),
    List(&'a mut Vec<usize>),
    Layout(&'a mut LayoutId),
    Task(&'a mut Task),
}

/// Keys whose values change parameter shapes; checkpoints are only
/// compatible with configs that agree on all of them.
const ARCHITECTURE_KEYS: &[&str] = &[
    "model.deter",
    "model.stoch",
    "model.embed",
    "model.hidden",
    "train.k",
    "ensemble.hidden",
    "agent.hidden",
];

impl Config {
    fn slots(&mut self) -> Vec<(&'static str, Slot<'_>)> {
        let t = &mut self.train;
        let m = &mut self.model;
        let e = &mut self.ensemble;
        let a = &mut self.agent;
        let v = &mut self.env;
        vec![
            ("train.lr_model", Slot::F(&mut t.lr_model)),
            ("train.lr_policy", Slot::F(&mut t.lr_policy)),
            ("train.lr_value", Slot::F(&mut t.lr_value)),
            ("train.k", Slot::U(&mut t.k)),
            ("train.batch", Slot::U(&mut t.batch)),
            ("train.seq_len", Slot::U(&mut t.seq_len)),
            ("train.capacity", Slot::U(&mut t.capacity)),
            ("train.gamma", Slot::F(&mut t.gamma)),
            ("train.alpha_explore", Slot::F(&mut t.alpha_explore)),
            ("train.alpha_finetune", Slot::F(&mut t.alpha_finetune)),
            ("train.n_explore", Slot::U(&mut t.n_explore)),
            ("train.n_fine", Slot::U(&mut t.n_fine)),
            ("train.chunk", Slot::U(&mut t.chunk)),
            ("train.train_ratio", Slot::F(&mut t.train_ratio)),
            ("train.randomization_period", Slot::U(&mut t.randomization_period)),
            ("train.seed", Slot::Seed(&mut t.seed)),
            ("train.warmup", Slot::U(&mut t.warmup)),
            ("train.log_interval", Slot::U(&mut t.log_interval)),
            ("train.imagine_starts", Slot::U(&mut t.imagine_starts)),
            ("train.grad_clip", Slot::F(&mut t.grad_clip)),
            ("train.layout", Slot::Layout(&mut t.layout)),
            ("train.task", Slot::Task(&mut t.task)),
            ("model.deter", Slot::U(&mut m.deter)),
            ("model.stoch", Slot::U(&mut m.stoch)),
            ("model.embed", Slot::U(&mut m.embed)),
            ("model.hidden", Slot::U(&mut m.hidden)),
            ("model.beta", Slot::F(&mut m.beta)),
            ("model.free_bits", Slot::F(&mut m.free_bits)),
            ("model.cont_weight", Slot::F(&mut m.cont_weight)),
            ("ensemble.hidden", Slot::List(&mut e.hidden)),
            ("ensemble.lr", Slot::F(&mut e.lr)),
            ("agent.horizon", Slot::U(&mut a.horizon)),
            ("agent.lambda", Slot::F(&mut a.lambda)),
            ("agent.entropy_weight", Slot::F(&mut a.entropy_weight)),
            ("agent.steer_penalty", Slot::F(&mut a.steer_penalty)),
            ("agent.steer_threshold", Slot::F(&mut a.steer_threshold)),
            ("agent.hidden", Slot::U(&mut a.hidden)),
            ("agent.grad_clip", Slot::F(&mut a.grad_clip)),
            ("env.dt", Slot::F(&mut v.dt)),
            ("env.wheelbase", Slot::F(&mut v.wheelbase)),
            ("env.v_max", Slot::F(&mut v.v_max)),
            ("env.a_max", Slot::F(&mut v.a_max)),
            ("env.max_steer", Slot::F(&mut v.max_steer)),
            ("env.t_max", Slot::U(&mut v.t_max)),
            ("env.stall_speed", Slot::F(&mut v.stall_speed)),
            ("env.stall_steps", Slot::U(&mut v.stall_steps)),
            ("env.wrong_way_angle_deg", Slot::F(&mut v.wrong_way_angle_deg)),
            ("env.wrong_way_steps", Slot::U(&mut v.wrong_way_steps)),
            ("env.ego_radius", Slot::F(&mut v.ego_radius)),
        ]
    }

    /// All addressable keys, in canonical order.
    pub fn keys() -> Vec<&'static str> {
        Config::default().slots().into_iter().map(|(k, _)| k).collect()
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |msg: String| PipelineError::ConfigValue {
            key: key.to_string(),
            msg,
        };
        let value = value.trim();
        let mut slots = self.slots();
        let (_, slot) = slots
            .iter_mut()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| PipelineError::UnknownKey(key.to_string()))?;
        match slot {
            Slot::F(x) => **x = value.parse().map_err(|e| bad(format!("{e}")))?,
            Slot::U(x) => **x = value.parse().map_err(|e| bad(format!("{e}")))?,
            Slot::Seed(x) => **x = value.parse().map_err(|e| bad(format!("{e}")))?,
            Slot::List(x) => {
                **x = value
                    .split(',')
                    .map(|p| p.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| bad(format!("{e}")))?
            }
            Slot::Layout(x) => **x = value.parse().map_err(|e| bad(format!("{e}")))?,
            Slot::Task(x) => **x = value.parse().map_err(|e| bad(format!("{e}")))?,
        }
        Ok(())
    }

    /// Current value of `key` in the text form [`Config::set`] accepts.
    pub fn get(&self, key: &str) -> Result<String> {
        let mut copy = self.clone();
        let slots = copy.slots();
        let (_, slot) = slots
            .iter()
            .find(|(k, _)| *k == key)
            .ok_or_else(|| PipelineError::UnknownKey(key.to_string()))?;
        Ok(render(slot))
    }

    /// Applies overrides from config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| PipelineError::ConfigSyntax {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(PipelineError::ConfigSyntax {
                    line: i + 1,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            self.set(key, value)?;
        }
        Ok(())
    }

    /// Defaults overridden by `text`, then validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::parse(&text)
    }

    /// Every key with its value; [`Config::parse`] of the result reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::new();
        for (k, slot) in copy.slots() {
            let _ = writeln!(out, "{k} = {}", render(&slot));
        }
        out
    }

    /// FNV-1a hash over the architecture keys.
    pub fn fingerprint(&self) -> u64 {
        let mut text = String::new();
        for k in ARCHITECTURE_KEYS {
            let _ = writeln!(text, "{k}={}", self.get(k).expect("architecture key exists"));
        }
        fnv1a(text.as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        let fail = |msg: String| Err(PipelineError::Config(msg));
        for (name, v) in [("lr_model", t.lr_model), ("lr_policy", t.lr_policy), ("lr_value", t.lr_value)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("train.{name} must be positive"));
            }
        }
        if t.k < 2 {
            return fail("train.k must be at least 2".into());
        }
        if t.batch == 0 || t.seq_len < 2 {
            return fail("train.batch must be ≥ 1 and train.seq_len ≥ 2".into());
        }
        if !(t.train_ratio > 0.0 && t.train_ratio <= 1.0) {
            return fail("train.train_ratio must lie in (0, 1]".into());
        }
        for (name, v) in [("alpha_explore", t.alpha_explore), ("alpha_finetune", t.alpha_finetune)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("train.{name} must lie in [0, 1]"));
            }
        }
        if t.chunk == 0 || t.log_interval == 0 || t.randomization_period == 0 {
            return fail("train.chunk, train.log_interval and train.randomization_period must be positive".into());
        }
        // a finished episode holds t_max + 1 records and must fit in the buffer
        if t.capacity < self.env.t_max + 1 || t.capacity < t.seq_len {
            return fail(format!(
                "train.capacity must hold at least one full episode ({} transitions)",
                self.env.t_max + 1
            ));
        }
        if t.warmup < t.seq_len {
            return fail("train.warmup must be at least train.seq_len".into());
        }
        if self.ensemble.hidden.iter().any(|&h| h == 0) {
            return fail("ensemble.hidden widths must be positive".into());
        }
        self.model_config().validate()?;
        self.agent_config().validate()?;
        self.env_config().validate().map_err(PipelineError::Config)?;
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.clone()
    }

    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            members: self.train.k,
            ..self.ensemble.clone()
        }
    }

    /// Agent settings; `alpha` is left at its default because rewards are
    /// mixed when replay batches are built, not inside the update.
    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            gamma: self.train.gamma,
            actor_lr: self.train.lr_policy,
            critic_lr: self.train.lr_value,
            ..self.agent.clone()
        }
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            randomization_period: self.train.randomization_period,
            ..self.env.clone()
        }
    }

    /// Env steps between updates.
    pub fn update_every(&self) -> usize {
        (1.0 / self.train.train_ratio).round().max(1.0) as usize
    }
}

fn render(slot: &Slot<'_>) -> String {
    match slot {
        Slot::F(x) => format!("{x:?}"),
        Slot::U(x) => x.to_string(),
        Slot::Seed(x) => x.to_string(),
        Slot::List(x) => x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "),
        Slot::Layout(x) => x.as_str().to_string(),
        Slot::Task(x) => x.as_str().to_string(),
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
