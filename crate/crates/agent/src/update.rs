use curio_diffcore::{clip_global_norm, collect_grads, AdamState, Parameters, SplitRng, Tape, Tensor, Var};
use curio_rssm::WorldModel;

use crate::config::AgentConfig;
use crate::error::Result;
use crate::imagine::{imagine, ImaginedReward};
use crate::policy::{Actor, Critic};
use crate::returns::lambda_returns_tape;

/// Scalars reported by one actor-critic update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActorCriticStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    /// Mean imagined reward (including the steering penalty).
    pub imagined_reward: f64,
}

/// Policy and value networks with their optimizers.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCritic {
    pub cfg: AgentConfig,
    pub actor: Actor,
    pub critic: Critic,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

impl ActorCritic {
    pub fn new(cfg: AgentConfig, feature_dim: usize, action_dim: usize, rng: &mut SplitRng) -> Result<Self> {
        cfg.validate()?;
        let actor = Actor::new(feature_dim, action_dim, cfg.hidden, rng);
        let critic = Critic::new(feature_dim, cfg.hidden, rng);
        Ok(Self::from_parts(cfg, actor, critic))
    }

    pub fn from_parts(cfg: AgentConfig, actor: Actor, critic: Critic) -> Self {
        let actor_opt = AdamState::for_params(&actor.params());
        let critic_opt = AdamState::for_params(&critic.params());
        Self {
            cfg,
            actor,
            critic,
            actor_opt,
            critic_opt,
        }
    }

    /// Imagines from the given posterior states and takes one Adam step on
    /// each of the actor (pathwise λ-return objective plus entropy bonus) and
    /// the critic (regression onto detached λ-returns). The world model and
    /// reward source are only read.
    pub fn update(
        &mut self,
        wm: &WorldModel,
        reward: &dyn ImaginedReward,
        start_h: &Tensor,
        start_z: &Tensor,
        rng: &mut SplitRng,
    ) -> Result<ActorCriticStats> {
        let cfg = self.cfg.clone();
        let (stats, mut actor_grads, mut critic_grads) = {
            let mut tape = Tape::new();
            let bwm = wm.bind(&mut tape, false);
            let actor = self.actor.bind(&mut tape, true);
            let critic = self.critic.bind(&mut tape, true);
            let traj = imagine(&mut tape, &bwm, &actor, reward, start_h, start_z, &cfg, rng)?;
            let h = traj.horizon();
            let rows = start_h.rows();

            let values = traj
                .features
                .iter()
                .map(|&f| critic.forward(&mut tape, f))
                .collect::<std::result::Result<Vec<Var>, _>>()?;
            let returns = lambda_returns_tape(&mut tape, &traj.rewards, &values, &traj.cont, cfg.gamma, cfg.lambda)?;

            // cumulative discount of reaching each acting state, held constant
            let mut weight = vec![1.0; rows];
            let mut weights = Vec::with_capacity(h);
            for i in 0..h {
                weights.push(tape.constant(Tensor::matrix(rows, 1, weight.clone())?));
                let c = tape.value(traj.cont[i]).data().to_vec();
                weight.iter_mut().zip(c).for_each(|(w, c)| *w *= cfg.gamma * c);
            }

            let mut terms = Vec::with_capacity(h);
            for i in 0..h {
                let bonus = tape.scale(traj.entropy[i], cfg.entropy_weight);
                let obj = tape.add(returns[i], bonus)?;
                terms.push(tape.mul(weights[i], obj)?);
            }
            let all = tape.concat_rows(&terms)?;
            let objective = tape.mean(all);
            let actor_loss = tape.neg(objective);
            tape.backward(actor_loss)?;
            let actor_grads = collect_grads(&tape, &actor.vars());
            tape.zero_grad();

            let mut sq = Vec::with_capacity(h);
            for i in 0..h {
                let f = tape.detach(traj.features[i]);
                let v = critic.forward(&mut tape, f)?;
                let target = tape.detach(returns[i]);
                let d = tape.sub(v, target)?;
                let d2 = tape.square(d);
                sq.push(tape.mul(weights[i], d2)?);
            }
            let all = tape.concat_rows(&sq)?;
            let critic_loss = tape.mean(all);
            let critic_loss = tape.scale(critic_loss, 0.5);
            tape.backward(critic_loss)?;
            let critic_grads = collect_grads(&tape, &critic.vars());

            let ent = tape.concat_rows(&traj.entropy)?;
            let rew = tape.concat_rows(&traj.rewards)?;
            let mean_of = |t: &Tape, v: Var| t.value(v).data().iter().sum::<f64>() / t.value(v).len() as f64;
            let stats = ActorCriticStats {
                actor_loss: tape.value(actor_loss).item(),
                critic_loss: tape.value(critic_loss).item(),
                entropy: mean_of(&tape, ent),
                imagined_reward: mean_of(&tape, rew),
            };
            (stats, actor_grads, critic_grads)
        };
        if cfg.grad_clip > 0.0 {
            clip_global_norm(&mut actor_grads, cfg.grad_clip);
            clip_global_norm(&mut critic_grads, cfg.grad_clip);
        }
        self.actor_opt.step(&mut self.actor.params_mut(), &actor_grads, cfg.actor_lr);
        self.critic_opt.step(&mut self.critic.params_mut(), &critic_grads, cfg.critic_lr);
        Ok(stats)
    }
}
