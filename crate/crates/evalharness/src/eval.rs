use curio_agent::Actor;
use curio_diffcore::SplitRng;
use curio_drivesim::{DriveEnv, EgoObservation, EnvConfig, LayoutId, Task, TrackLayout};
use curio_pipeline::{finetune_phase, obs_batch, Config, FinetuneMode, Trainer};
use curio_rssm::{LatentState, WorldModel};

use crate::error::{EvalError, Result};
use crate::report::{EpisodeRecord, EvalReport};

/// Anything that maps observations to actions within an episode.
pub trait Driver {
    fn reset(&mut self);
    fn act(&mut self, obs: &EgoObservation) -> Result<[f64; 2]>;
}

/// The trained agent with greedy actions: posterior means for the latent,
/// the squashed mean for the action.
pub struct AgentDriver<'a> {
    wm: &'a WorldModel,
    actor: &'a Actor,
    latent: LatentState,
    prev_action: [f64; 2],
    // greedy acting draws nothing, but the signature wants a generator
    rng: SplitRng,
}

impl<'a> AgentDriver<'a> {
    pub fn new(wm: &'a WorldModel, actor: &'a Actor) -> Self {
        Self {
            latent: LatentState::initial(wm.cfg.deter, wm.cfg.stoch),
            wm,
            actor,
            prev_action: [0.0; 2],
            rng: SplitRng::seed_from(0),
        }
    }
}

impl Driver for AgentDriver<'_> {
    fn reset(&mut self) {
        self.latent = LatentState::initial(self.wm.cfg.deter, self.wm.cfg.stoch);
        self.prev_action = [0.0; 2];
    }

    fn act(&mut self, obs: &EgoObservation) -> Result<[f64; 2]> {
        let batch = obs_batch(&self.wm.cfg, obs)?;
        self.latent = self.wm.observe_step(&self.latent, &self.prev_action, &batch, None)?;
        let a = self.actor.act(&self.latent.feature(), true, &mut self.rng)?;
        self.prev_action = [a[0], a[1]];
        Ok(self.prev_action)
    }
}

/// Uniform actions on `[−1, 1]²`.
pub struct RandomDriver {
    pub rng: SplitRng,
}

impl Driver for RandomDriver {
    fn reset(&mut self) {}

    fn act(&mut self, _obs: &EgoObservation) -> Result<[f64; 2]> {
        Ok([self.rng.uniform(-1.0, 1.0), self.rng.uniform(-1.0, 1.0)])
    }
}

/// Runs whole episodes on `TrackLayout::randomize(layout, seed)` until at
/// least `eval_steps` env steps have elapsed; the last episode always runs
/// to its end. Episode spawns are drawn from a generator seeded by `seed`.
pub fn run_eval_with(
    driver: &mut dyn Driver,
    env_cfg: &EnvConfig,
    task: Task,
    layout: LayoutId,
    eval_steps: usize,
    seed: u64,
) -> Result<EvalReport> {
    if eval_steps == 0 {
        return Err(EvalError::Invalid("eval_steps must be positive".into()));
    }
    let mut env = DriveEnv::new(TrackLayout::randomize(layout, seed), env_cfg.clone());
    let mut spawns = SplitRng::seed_from(seed ^ 0x5bd1_e995);
    let mut episodes = Vec::new();
    let mut total = 0;
    while total < eval_steps {
        let ep_seed = spawns.next_u64();
        let mut obs = env.reset(ep_seed);
        driver.reset();
        let mut return_ext = 0.0;
        let record = loop {
            let action = driver.act(&obs)?;
            let out = env.step(action);
            total += 1;
            return_ext += out.rewards.get(task);
            if out.terminated {
                let reason = out.reason.ok_or_else(|| EvalError::Invalid("episode ended without a reason".into()))?;
                let mut events = [0u32; 5];
                for e in out.events.iter() {
                    events[e as usize] += 1;
                }
                break EpisodeRecord {
                    task,
                    layout,
                    seed: ep_seed,
                    steps: env.t(),
                    reason,
                    events,
                    return_ext,
                };
            }
            obs = out.obs;
        };
        episodes.push(record);
    }
    Ok(EvalReport::from_episodes(task, layout, seed, episodes))
}

/// Greedy evaluation of a trained run.
pub fn run_eval(trainer: &Trainer, task: Task, layout: LayoutId, eval_steps: usize, seed: u64) -> Result<EvalReport> {
    let mut driver = AgentDriver::new(&trainer.wm, &trainer.ac.actor);
    run_eval_with(&mut driver, &trainer.cfg.env_config(), task, layout, eval_steps, seed)
}

/// One report per `(task, layout, seed)`, ordered task-major, then layout, then seed.
pub fn transfer_matrix(
    trainer: &Trainer,
    tasks: &[Task],
    layouts: &[LayoutId],
    eval_steps: usize,
    seeds: &[u64],
) -> Result<Vec<EvalReport>> {
    let mut out = Vec::with_capacity(tasks.len() * layouts.len() * seeds.len());
    for &task in tasks {
        for &layout in layouts {
            for &seed in seeds {
                out.push(run_eval(trainer, task, layout, eval_steps, seed)?);
            }
        }
    }
    Ok(out)
}

/// Fine-tunes (or not, for zero-shot) and evaluates greedily on `layout`.
pub fn finetune_and_eval(
    trainer: Trainer,
    cfg: &Config,
    task: Task,
    mode: FinetuneMode,
    layout: LayoutId,
    eval_steps: usize,
    seed: u64,
) -> Result<(Trainer, EvalReport)> {
    let tuned = finetune_phase(trainer, cfg, task, mode)?;
    let report = run_eval(&tuned, task, layout, eval_steps, seed)?;
    Ok((tuned, report))
}

