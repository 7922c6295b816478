//! Filtering over replayed sequences and the world-model loss.

use curio_diffcore::{clip_global_norm, collect_grads, AdamState, Parameters, SplitRng, Tape, Tensor, Var};

use crate::error::{ModelError, Result};
use crate::model::{BoundWorldModel, WorldModel};
use crate::obs::ObsBatch;

/// `B` aligned sequences of `T` steps, stored time-major (row `t·B + b`).
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub batch: usize,
    pub steps: usize,
    pub obs: ObsBatch,
    /// Action taken before each observation (`a_{t−1}` for `obs_t`), `T·B × A`.
    pub prev_actions: Tensor,
    /// Reward-head target received on arrival at each observation, `T·B × 1`.
    pub rewards: Tensor,
    /// 1 while the episode continues, 0 on its terminal observation, `T·B × 1`.
    pub cont: Tensor,
}

impl SequenceBatch {
    pub fn new(batch: usize, obs: ObsBatch, prev_actions: Tensor, rewards: Tensor, cont: Tensor) -> Result<Self> {
        if batch == 0 || obs.rows % batch != 0 {
            return Err(ModelError::Misaligned(format!(
                "{} observation rows do not split into sequences of batch {batch}",
                obs.rows
            )));
        }
        let steps = obs.rows / batch;
        if steps < 2 {
            return Err(ModelError::Misaligned(format!("need at least 2 steps, got {steps}")));
        }
        for (what, t) in [("actions", &prev_actions), ("rewards", &rewards), ("continuations", &cont)] {
            if t.rows() != obs.rows {
                return Err(ModelError::Misaligned(format!(
                    "{what} have {} rows, observations {}",
                    t.rows(),
                    obs.rows
                )));
            }
        }
        if rewards.cols() != 1 || cont.cols() != 1 {
            return Err(ModelError::Misaligned("rewards and continuations must be columns".into()));
        }
        Ok(Self {
            batch,
            steps,
            obs,
            prev_actions,
            rewards,
            cont,
        })
    }

    pub fn rows(&self) -> usize {
        self.batch * self.steps
    }
}

/// Per-batch means of the world-model loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ModelLossBreakdown {
    pub recon_nll: f64,
    pub reward_nll: f64,
    pub kl_raw: f64,
    pub kl_used: f64,
    pub continuation_nll: f64,
    pub total: f64,
}

/// Tape handles produced by [`observe_sequence`].
#[derive(Clone, Debug)]
pub struct Observed {
    pub loss: Var,
    pub breakdown: ModelLossBreakdown,
    /// Time-major stacks over all `T·B` rows.
    pub h: Var,
    pub z: Var,
    pub post_mean: Var,
    pub post_std: Var,
    pub prior_mean: Var,
    pub prior_std: Var,
}

/// Posterior states of a replayed batch, detached from any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorStates {
    pub batch: usize,
    pub steps: usize,
    pub h: Tensor,
    pub z: Tensor,
    pub z_mean: Tensor,
}

/// `½ · mean((pred − target)²)`: unit-variance Gaussian NLL without its constant.
pub fn reward_nll(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let d2 = tape.square(d);
    let m = tape.mean(d2);
    Ok(tape.scale(m, 0.5))
}

/// Mean Bernoulli cross-entropy of `sigmoid(logit)` against 0/1 targets.
pub fn continuation_nll(tape: &mut Tape, logit: Var, target: Var) -> Result<Var> {
    // softplus(l) − y·l
    let sp = tape.softplus(logit);
    let yl = tape.mul(target, logit)?;
    let e = tape.sub(sp, yl)?;
    Ok(tape.mean(e))
}

/// Standard-normal sampling noise for a whole batch, `T·B × D_z`.
pub fn draw_noise(rng: &mut SplitRng, rows: usize, stoch: usize) -> Tensor {
    Tensor::matrix(rows, stoch, rng.normals(rows * stoch)).expect("dims")
}

/// Filtering pass from `h₀ = 0, z₀ = 0`; accumulates the world-model loss.
///
/// `noise` (`T·B × D_z`) drives the reparameterized posterior samples, so a
/// fixed tensor makes the loss a deterministic function of the parameters.
pub fn observe_sequence(
    wm: &BoundWorldModel,
    tape: &mut Tape,
    seq: &SequenceBatch,
    noise: &Tensor,
) -> Result<Observed> {
    let cfg = &wm.cfg;
    let (b, steps) = (seq.batch, seq.steps);
    if noise.rows() != seq.rows() || noise.cols() != cfg.stoch {
        return Err(ModelError::Shape {
            what: "noise rows",
            expected: seq.rows(),
            got: noise.rows(),
        });
    }
    let embed = wm.embed(tape, &seq.obs)?;
    let scalars = tape.constant(seq.obs.scalars.clone());
    let actions = tape.constant(seq.prev_actions.clone());
    let noise = tape.constant(noise.clone());
    let mut h = tape.constant(Tensor::zeros(&[b, cfg.deter]));
    let mut z = tape.constant(Tensor::zeros(&[b, cfg.stoch]));
    let mut parts: [Vec<Var>; 6] = Default::default();
    for t in 0..steps {
        let a = tape.slice_rows(actions, t * b, b)?;
        h = wm.sequence_step(tape, h, z, a)?;
        let e = tape.slice_rows(embed, t * b, b)?;
        let s = tape.slice_rows(scalars, t * b, b)?;
        let (pm, ps) = wm.posterior(tape, e, s, h)?;
        let eps = tape.slice_rows(noise, t * b, b)?;
        z = tape.gaussian_sample(pm, ps, eps)?;
        let (qm, qs) = wm.prior(tape, h)?;
        for (list, v) in parts.iter_mut().zip([h, z, pm, ps, qm, qs]) {
            list.push(v);
        }
    }
    let [hs, zs, pms, pss, qms, qss] = parts;
    let h_all = tape.concat_rows(&hs)?;
    let z_all = tape.concat_rows(&zs)?;
    let post_mean = tape.concat_rows(&pms)?;
    let post_std = tape.concat_rows(&pss)?;
    let prior_mean = tape.concat_rows(&qms)?;
    let prior_std = tape.concat_rows(&qss)?;
    let feat = wm.feature(tape, h_all, z_all)?;

    let logits = wm.decode(tape, feat)?;
    let recon = tape.categorical_nll(logits, std::sync::Arc::clone(&seq.obs.target), cfg.classes)?;
    let r_pred = wm.predict_reward(tape, feat)?;
    let r_target = tape.constant(seq.rewards.clone());
    let rew = reward_nll(tape, r_pred, r_target)?;
    let c_logit = wm.continuation_logit(tape, feat)?;
    let c_target = tape.constant(seq.cont.clone());
    let cont = continuation_nll(tape, c_logit, c_target)?;
    let kl_sum = tape.kl_diag_gaussians(post_mean, post_std, prior_mean, prior_std)?;
    let kl = tape.scale(kl_sum, 1.0 / seq.rows() as f64);

    let kl_raw = tape.value(kl).item();
    // below the floor the KL term is a constant and exerts no pressure
    let kl_used = if kl_raw < cfg.free_bits {
        tape.scalar(cfg.free_bits)
    } else {
        kl
    };
    let partial = tape.add(recon, rew)?;
    let kl_term = tape.scale(kl_used, cfg.beta);
    let partial = tape.add(partial, kl_term)?;
    let cont_term = tape.scale(cont, cfg.cont_weight);
    let loss = tape.add(partial, cont_term)?;

    let breakdown = ModelLossBreakdown {
        recon_nll: tape.value(recon).item(),
        reward_nll: tape.value(rew).item(),
        kl_raw,
        kl_used: tape.value(kl_used).item(),
        continuation_nll: tape.value(cont).item(),
        total: tape.value(loss).item(),
    };
    Ok(Observed {
        loss,
        breakdown,
        h: h_all,
        z: z_all,
        post_mean,
        post_std,
        prior_mean,
        prior_std,
    })
}

impl WorldModel {
    /// One optimizer step on the loss of `seq`. Returns the loss terms and
    /// the (pre-update) posterior states of the batch.
    pub fn train_step(
        &mut self,
        opt: &mut AdamState,
        seq: &SequenceBatch,
        noise: &Tensor,
        lr: f64,
        grad_clip: f64,
    ) -> Result<(ModelLossBreakdown, PosteriorStates)> {
        let (breakdown, states, mut grads) = {
            let mut tape = Tape::new();
            let wm = self.bind(&mut tape, true);
            let out = observe_sequence(&wm, &mut tape, seq, noise)?;
            tape.backward(out.loss)?;
            let grads = collect_grads(&tape, &wm.vars());
            let states = PosteriorStates {
                batch: seq.batch,
                steps: seq.steps,
                h: tape.value(out.h).clone(),
                z: tape.value(out.z).clone(),
                z_mean: tape.value(out.post_mean).clone(),
            };
            (out.breakdown, states, grads)
        };
        if grad_clip > 0.0 {
            clip_global_norm(&mut grads, grad_clip);
        }
        opt.step(&mut self.params_mut(), &grads, lr);
        Ok((breakdown, states))
    }

    pub fn optimizer(&self) -> AdamState {
        AdamState::for_params(&self.params())
    }
}

/// Belief state of a single agent.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState {
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub z_mean: Vec<f64>,
    pub z_std: Vec<f64>,
}

impl LatentState {
    /// The state before any observation: `h = 0, z = 0`.
    pub fn initial(deter: usize, stoch: usize) -> Self {
        Self {
            h: vec![0.0; deter],
            z: vec![0.0; stoch],
            z_mean: vec![0.0; stoch],
            z_std: vec![1.0; stoch],
        }
    }

    pub fn feature(&self) -> Vec<f64> {
        let mut f = self.h.clone();
        f.extend_from_slice(&self.z);
        f
    }
}

impl WorldModel {
    /// Advances a single belief by one real step. With `noise = None` the
    /// posterior mean is used as `z`.
    pub fn observe_step(
        &self,
        prev: &LatentState,
        prev_action: &[f64],
        obs: &ObsBatch,
        noise: Option<&[f64]>,
    ) -> Result<LatentState> {
        if obs.rows != 1 {
            return Err(ModelError::Shape {
                what: "observation rows",
                expected: 1,
                got: obs.rows,
            });
        }
        let mut tape = Tape::new();
        let wm = self.bind(&mut tape, false);
        let h0 = tape.constant(Tensor::row(prev.h.clone()));
        let z0 = tape.constant(Tensor::row(prev.z.clone()));
        let a = tape.constant(Tensor::row(prev_action.to_vec()));
        let h = wm.sequence_step(&mut tape, h0, z0, a)?;
        let (m, s) = wm.encode(&mut tape, obs, h)?;
        let z = match noise {
            Some(eps) => {
                let e = tape.constant(Tensor::row(eps.to_vec()));
                tape.gaussian_sample(m, s, e)?
            }
            None => m,
        };
        Ok(LatentState {
            h: tape.value(h).data().to_vec(),
            z: tape.value(z).data().to_vec(),
            z_mean: tape.value(m).data().to_vec(),
            z_std: tape.value(s).data().to_vec(),
        })
    }
}
