use curio_agent::{ActorCritic, ImaginedReward, LearnedReward};
use curio_diffcore::{AdamState, SplitRng, Tensor};
use curio_drivesim::{DriveEnv, Event, LayoutId, Task, TrackLayout};
use curio_ensemble::Ensemble;
use curio_rssm::{draw_noise, LatentState, PosteriorStates, WorldModel};

use crate::config::Config;
use crate::error::{PipelineError, Result};
use crate::metrics::{IntervalStats, MetricsRow, Phase};
use crate::replay::{obs_batch, ReplayBuffer, TransitionRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinetuneMode {
    ZeroShot,
    FewShot,
}

impl std::str::FromStr for FinetuneMode {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "zero_shot" => Ok(FinetuneMode::ZeroShot),
            "few" | "few_shot" => Ok(FinetuneMode::FewShot),
            other => Err(PipelineError::Config(format!("unknown fine-tune mode `{other}` (expected zero or few)"))),
        }
    }
}

/// Step bookkeeping; everything here is checkpointed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    /// Env steps over the whole run.
    pub env_steps: u64,
    /// Env steps since the current phase began.
    pub phase_steps: u64,
    pub updates: u64,
    /// Id of the newest episode.
    pub episode: u64,
    /// Index of the current randomized layout.
    pub layout_epoch: u64,
}

/// What one env step did, for callers tracking coverage or outcomes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub x: f64,
    pub y: f64,
    pub r_int: f64,
    pub r_ext: f64,
    pub terminated: bool,
    pub reason: Option<Event>,
    pub updated: bool,
}

/// The whole mutable state of a training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub cfg: Config,
    pub wm: WorldModel,
    pub wm_opt: AdamState,
    pub ensemble: Ensemble,
    pub ac: ActorCritic,
    pub buffer: ReplayBuffer,
    pub env: DriveEnv,
    pub phase: Phase,
    pub task: Task,
    pub counters: Counters,
    pub latent: LatentState,
    pub prev_action: [f64; 2],
    /// The next step starts a new episode.
    pub need_reset: bool,
    /// That reset also moves to the next randomized layout.
    pub relayout: bool,
    pub act_rng: SplitRng,
    pub train_rng: SplitRng,
    pub interval: IntervalStats,
    /// Rows emitted since the caller last drained them; not checkpointed.
    pub metrics: Vec<MetricsRow>,
}

/// Seed of the randomized layout for `epoch` of `phase`.
pub fn layout_seed(seed: u64, phase: Phase, epoch: u64) -> u64 {
    let tag = match phase {
        Phase::Explore => 0x9e37_79b9_7f4a_7c15u64,
        Phase::Finetune => 0xc2b2_ae3d_27d4_eb4fu64,
    };
    seed.wrapping_mul(0xff51_afd7_ed55_8ccd) ^ tag.wrapping_add(epoch.wrapping_mul(0x2545_f491_4f6c_dd1d))
}

impl Trainer {
    /// Fresh parameters and an empty buffer; deterministic in `cfg.train.seed`.
    pub fn new(cfg: Config) -> Result<Self> {
        cfg.validate()?;
        let mut init = SplitRng::seed_from(cfg.train.seed);
        let model_cfg = cfg.model_config();
        let wm = WorldModel::new(model_cfg.clone(), &mut init.split())?;
        let wm_opt = wm.optimizer();
        let feature_dim = model_cfg.feature_dim();
        let ensemble = Ensemble::new(
            cfg.ensemble_config(),
            feature_dim + model_cfg.action_dim,
            model_cfg.stoch,
            init.next_u64(),
        )?;
        let ac = ActorCritic::new(cfg.agent_config(), feature_dim, model_cfg.action_dim, &mut init.split())?;
        let act_rng = init.split();
        let train_rng = init.split();
        let layout = TrackLayout::randomize(cfg.train.layout, layout_seed(cfg.train.seed, Phase::Explore, 0));
        let env = DriveEnv::new(layout, cfg.env_config());
        Ok(Self {
            buffer: ReplayBuffer::new(cfg.train.capacity),
            latent: LatentState::initial(model_cfg.deter, model_cfg.stoch),
            task: cfg.train.task,
            cfg,
            wm,
            wm_opt,
            ensemble,
            ac,
            env,
            phase: Phase::Explore,
            counters: Counters::default(),
            prev_action: [0.0; 2],
            need_reset: true,
            relayout: false,
            act_rng,
            train_rng,
            interval: IntervalStats::default(),
            metrics: Vec::new(),
        })
    }

    /// Total optimizer steps taken by every network.
    pub fn optimizer_steps(&self) -> u64 {
        self.wm_opt.t
            + self.ensemble.opts.iter().map(|o| o.t).sum::<u64>()
            + self.ac.actor_opt.t
            + self.ac.critic_opt.t
    }

    /// Intrinsic-reward weight of the current phase.
    pub fn intrinsic_weight(&self) -> f64 {
        match self.phase {
            Phase::Explore => self.cfg.train.alpha_explore,
            Phase::Finetune => self.cfg.train.alpha_finetune,
        }
    }

    pub fn layout_id(&self) -> LayoutId {
        self.cfg.train.layout
    }

    /// Switches to fine-tuning on `task`: the phase step counter restarts and
    /// the next step begins a fresh episode on the first fine-tune layout.
    /// Parameters are untouched.
    pub fn begin_finetune(&mut self, task: Task) {
        self.phase = Phase::Finetune;
        self.task = task;
        self.counters.phase_steps = 0;
        self.counters.layout_epoch = 0;
        self.interval = IntervalStats::default();
        let seed = layout_seed(self.cfg.train.seed, Phase::Finetune, 0);
        self.env.set_layout(TrackLayout::randomize(self.cfg.train.layout, seed));
        self.need_reset = true;
        self.relayout = false;
    }

    /// Runs `steps` env steps, calling `on_step` after each.
    pub fn run(&mut self, steps: u64, on_step: &mut dyn FnMut(&StepInfo)) -> Result<()> {
        for _ in 0..steps {
            let info = self.step()?;
            on_step(&info);
        }
        Ok(())
    }

    /// Takes the metrics rows emitted so far.
    pub fn drain_metrics(&mut self) -> Vec<MetricsRow> {
        std::mem::take(&mut self.metrics)
    }

    fn start_episode(&mut self) -> Result<()> {
        if self.relayout {
            self.counters.layout_epoch += 1;
            let seed = layout_seed(self.cfg.train.seed, self.phase, self.counters.layout_epoch);
            self.env.set_layout(TrackLayout::randomize(self.cfg.train.layout, seed));
            self.relayout = false;
        }
        let obs = self.env.reset(self.act_rng.next_u64());
        self.counters.episode += 1;
        let m = &self.wm.cfg;
        self.latent = LatentState::initial(m.deter, m.stoch);
        self.prev_action = [0.0; 2];
        self.buffer.push(TransitionRecord::first(&obs, self.counters.episode))?;
        self.need_reset = false;
        Ok(())
    }

    /// One env step with the stochastic policy, plus an update when due.
    pub fn step(&mut self) -> Result<StepInfo> {
        if self.need_reset {
            self.start_episode()?;
        }
        let obs = self.env.observation();
        let stoch = self.wm.cfg.stoch;
        let noise = self.act_rng.normals(stoch);
        let batch = obs_batch(&self.wm.cfg, &obs)?;
        self.latent = self.wm.observe_step(&self.latent, &self.prev_action, &batch, Some(&noise))?;
        let feature = self.latent.feature();
        let action = self.ac.actor.act(&feature, false, &mut self.act_rng)?;
        let r_int = self.ensemble.intrinsic_reward(&feature, &action)?;
        let action = [action[0], action[1]];
        let out = self.env.step(action);
        self.counters.env_steps += 1;
        self.counters.phase_steps += 1;
        let state = *self.env.state();
        self.buffer.push(TransitionRecord {
            frame: std::sync::Arc::clone(&out.obs.frames[curio_drivesim::STACK - 1]),
            speed_norm: out.obs.speed_norm,
            prev_steer: out.obs.prev_steer,
            action,
            r_ext: out.rewards.0,
            r_int,
            cont: !out.terminated,
            episode: self.counters.episode,
            step: self.env.t() as u32,
        })?;
        self.prev_action = action;
        let r_ext = out.rewards.get(self.task);
        self.interval.record_step(r_int, r_ext);
        if out.terminated {
            self.need_reset = true;
        }
        if self.counters.phase_steps % self.cfg.train.randomization_period as u64 == 0 {
            // truncation, not termination: the last record keeps cont = 1
            self.need_reset = true;
            self.relayout = true;
        }
        let mut updated = false;
        if self.counters.phase_steps % self.cfg.update_every() as u64 == 0
            && self.buffer.len() >= self.cfg.train.warmup
            && self.buffer.valid_starts(self.cfg.train.seq_len) > 0
        {
            self.update()?;
            updated = true;
        }
        if self.counters.phase_steps % self.cfg.train.log_interval as u64 == 0 {
            let row = self.interval.flush(self.counters.env_steps, self.phase, self.task);
            self.metrics.push(row);
        }
        Ok(StepInfo {
            x: state.x,
            y: state.y,
            r_int,
            r_ext,
            terminated: out.terminated,
            reason: out.reason,
            updated,
        })
    }

    /// One replay update of the world model, (while exploring) the ensemble,
    /// and the actor-critic.
    pub fn update(&mut self) -> Result<()> {
        let t = &self.cfg.train;
        let (batch, seq_len) = (t.batch, t.seq_len);
        let refs = self.buffer.sample(batch, seq_len, &mut self.train_rng)?;
        let seq = self
            .buffer
            .build_batch(&refs, seq_len, &self.wm.cfg, self.task, self.intrinsic_weight())?;
        let noise = draw_noise(&mut self.train_rng, seq.rows(), self.wm.cfg.stoch);
        let (model, post) = self
            .wm
            .train_step(&mut self.wm_opt, &seq, &noise, t.lr_model, t.grad_clip)?;
        let ensemble_loss = match self.phase {
            Phase::Explore => {
                let (x, a, y) = ensemble_targets(&post, &seq.prev_actions)?;
                self.ensemble.train_step(&x, &a, &y)? / self.ensemble.len() as f64
            }
            Phase::Finetune => f64::NAN,
        };
        let (h, z) = self.imagination_starts(&post)?;
        let reward: &dyn ImaginedReward = match self.phase {
            Phase::Explore => &self.ensemble,
            Phase::Finetune => &LearnedReward,
        };
        let ac = self.ac.update(&self.wm, reward, &h, &z, &mut self.train_rng)?;
        self.counters.updates += 1;
        self.interval.record_update(&model, ensemble_loss, &ac);
        Ok(())
    }

    fn imagination_starts(&mut self, post: &PosteriorStates) -> Result<(Tensor, Tensor)> {
        let rows = post.h.rows();
        let n = self.cfg.train.imagine_starts;
        if n == 0 || n >= rows {
            return Ok((post.h.clone(), post.z.clone()));
        }
        let picks: Vec<usize> = (0..n).map(|_| self.train_rng.below(rows)).collect();
        Ok((gather_rows(&post.h, &picks)?, gather_rows(&post.z, &picks)?))
    }
}

fn gather_rows(t: &Tensor, rows: &[usize]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(rows.len() * t.cols());
    for &r in rows {
        data.extend_from_slice(t.row_slice(r));
    }
    Ok(Tensor::matrix(rows.len(), t.cols(), data)?)
}

/// Ensemble training triples from a batch's posterior: `(feature_t,
/// action_t) → z_mean_{t+1}` for every consecutive pair inside a sequence.
/// In the time-major layout the action taken at `t` is stored as the
/// previous action of row `t + 1`.
pub fn ensemble_targets(post: &PosteriorStates, prev_actions: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, steps) = (post.batch, post.steps);
    let pairs = b * (steps - 1);
    let (dh, dz, da) = (post.h.cols(), post.z.cols(), prev_actions.cols());
    let mut x = Vec::with_capacity(pairs * (dh + dz));
    let mut a = Vec::with_capacity(pairs * da);
    let mut y = Vec::with_capacity(pairs * dz);
    for t in 0..steps - 1 {
        for i in 0..b {
            let now = t * b + i;
            let next = now + b;
            x.extend_from_slice(post.h.row_slice(now));
            x.extend_from_slice(post.z.row_slice(now));
            a.extend_from_slice(prev_actions.row_slice(next));
            y.extend_from_slice(post.z_mean.row_slice(next));
        }
    }
    Ok((
        Tensor::matrix(pairs, dh + dz, x)?,
        Tensor::matrix(pairs, da, a)?,
        Tensor::matrix(pairs, dz, y)?,
    ))
}

/// Runs exploration from scratch for `cfg.train.n_explore` env steps.
pub fn explore_phase(cfg: &Config) -> Result<Trainer> {
    let mut trainer = Trainer::new(cfg.clone())?;
    trainer.run(cfg.train.n_explore as u64, &mut |_| {})?;
    Ok(trainer)
}

/// Fine-tunes a loaded run on `task`. Zero-shot leaves every parameter and
/// optimizer untouched; few-shot collects `cfg.train.n_fine` on-policy steps
/// with the learned reward head driving imagination, the ensemble frozen.
/// Evaluation is left to the caller.
pub fn finetune_phase(mut trainer: Trainer, cfg: &Config, task: Task, mode: FinetuneMode) -> Result<Trainer> {
    if cfg.fingerprint() != trainer.cfg.fingerprint() {
        return Err(PipelineError::Fingerprint {
            expected: cfg.fingerprint(),
            found: trainer.cfg.fingerprint(),
        });
    }
    cfg.validate()?;
    trainer.cfg = cfg.clone();
    trainer.ac.cfg = cfg.agent_config();
    trainer.begin_finetune(task);
    if mode == FinetuneMode::FewShot {
        trainer.run(cfg.train.n_fine as u64, &mut |_| {})?;
    }
    Ok(trainer)
}
