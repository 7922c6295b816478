use curio_diffcore::{SplitRng, Tape, Tensor, Var};
use curio_ensemble::Ensemble;
use curio_rssm::BoundWorldModel;

use crate::config::AgentConfig;
use crate::error::{AgentError, Result};
use crate::policy::BoundActor;
use crate::shaping::steering_penalty;

/// Source of the reward for an imagined transition `feature --action--> next`.
pub trait ImaginedReward {
    /// `rows × 1` rewards.
    fn reward(&self, tape: &mut Tape, wm: &BoundWorldModel, feature: Var, action: Var, next: Var) -> Result<Var>;
}

/// Ensemble disagreement on the `(state, action)` pair that produced `next`.
impl ImaginedReward for Ensemble {
    fn reward(&self, tape: &mut Tape, _wm: &BoundWorldModel, feature: Var, action: Var, _next: Var) -> Result<Var> {
        let members = self.bind(tape, false);
        let x = tape.concat_cols(&[feature, action])?;
        Ok(members.disagreement(tape, x)?)
    }
}

/// The world model's own reward head evaluated on the arrival state.
#[derive(Clone, Copy, Debug, Default)]
pub struct LearnedReward;

impl ImaginedReward for LearnedReward {
    fn reward(&self, tape: &mut Tape, wm: &BoundWorldModel, _feature: Var, _action: Var, next: Var) -> Result<Var> {
        Ok(wm.predict_reward(tape, next)?)
    }
}

/// A rollout of `H` steps for a batch of start states, as tape handles.
#[derive(Clone, Debug)]
pub struct ImaginedTrajectory {
    /// `H + 1` feature batches; entry 0 holds the (detached) start states.
    pub features: Vec<Var>,
    pub actions: Vec<Var>,
    /// Policy entropy at each acting state.
    pub entropy: Vec<Var>,
    /// `H` rewards including the steering penalty.
    pub rewards: Vec<Var>,
    /// `H` continuation probabilities (constants).
    pub cont: Vec<Var>,
}

impl ImaginedTrajectory {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }
}

/// Rolls the policy forward inside the (frozen) world model from posterior start states.
#[allow(clippy::too_many_arguments)]
pub fn imagine(
    tape: &mut Tape,
    wm: &BoundWorldModel,
    actor: &BoundActor,
    reward: &dyn ImaginedReward,
    start_h: &Tensor,
    start_z: &Tensor,
    cfg: &AgentConfig,
    rng: &mut SplitRng,
) -> Result<ImaginedTrajectory> {
    if cfg.horizon == 0 {
        return Err(AgentError::Horizon);
    }
    let rows = start_h.rows();
    if start_z.rows() != rows {
        return Err(AgentError::Misaligned(format!(
            "{rows} start h rows vs {} z rows",
            start_z.rows()
        )));
    }
    let (stoch, adim) = (wm.cfg.stoch, wm.cfg.action_dim);
    let mut h = tape.constant(start_h.clone());
    let mut z = tape.constant(start_z.clone());
    let mut feat = wm.feature(tape, h, z)?;
    let mut traj = ImaginedTrajectory {
        features: vec![feat],
        actions: Vec::with_capacity(cfg.horizon),
        entropy: Vec::with_capacity(cfg.horizon),
        rewards: Vec::with_capacity(cfg.horizon),
        cont: Vec::with_capacity(cfg.horizon),
    };
    for _ in 0..cfg.horizon {
        let eps_a = tape.constant(Tensor::matrix(rows, adim, rng.normals(rows * adim))?);
        let (a, ent) = actor.sample(tape, feat, eps_a)?;
        h = wm.sequence_step(tape, h, z, a)?;
        let (pm, ps) = wm.prior(tape, h)?;
        let eps_z = tape.constant(Tensor::matrix(rows, stoch, rng.normals(rows * stoch))?);
        z = tape.gaussian_sample(pm, ps, eps_z)?;
        let next = wm.feature(tape, h, z)?;

        let r = reward.reward(tape, wm, feat, a, next)?;
        let acts = tape.value(a).clone();
        let pen: Vec<f64> = (0..rows)
            .map(|i| {
                let row = acts.row_slice(i);
                steering_penalty([row[0], row.get(1).copied().unwrap_or(0.0)], cfg.steer_penalty, cfg.steer_threshold)
            })
            .collect();
        let pen = tape.constant(Tensor::matrix(rows, 1, pen)?);
        let r = tape.add(r, pen)?;
        let c_logit = wm.continuation_logit(tape, next)?;
        let c = tape.sigmoid(c_logit);
        let c = tape.detach(c);

        traj.actions.push(a);
        traj.entropy.push(ent);
        traj.rewards.push(r);
        traj.cont.push(c);
        traj.features.push(next);
        feat = next;
    }
    Ok(traj)
}
