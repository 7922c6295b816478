//! Parameters of the world model and their on-tape view.

use std::sync::Arc;

use curio_diffcore::{BoundMlp, Mlp, Param, Parameters, SplitRng, Tape, Tensor, Var};

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::obs::ObsBatch;

/// Additive floor on every predicted standard deviation.
pub const STD_FLOOR: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct WorldModel {
    pub cfg: ModelConfig,
    /// One row per one-hot position; the observation embedding is a row sum.
    pub embed_table: Param,
    pub embed_bias: Param,
    /// `[embed, scalars, h] → [mean, raw std]` of the posterior.
    pub encoder: Mlp,
    /// Input weights of the recurrent core for the fused `[update, reset, candidate]` blocks.
    pub gru_x: Param,
    /// Recurrent weights of the update and reset gates.
    pub gru_h: Param,
    /// Recurrent weights of the candidate, applied to `reset ⊙ h`.
    pub gru_hc: Param,
    pub gru_b: Param,
    pub prior: Mlp,
    /// `[h, z] → cells × classes` logits, cell-major.
    pub decoder: Mlp,
    pub reward: Mlp,
    pub cont: Mlp,
}

impl WorldModel {
    pub fn new(cfg: ModelConfig, rng: &mut SplitRng) -> Result<Self> {
        cfg.validate()?;
        let (dh, dz, f) = (cfg.deter, cfg.stoch, cfg.feature_dim());
        let table_std = 1.0 / (cfg.active_per_obs() as f64).sqrt();
        let table = rng
            .normals(cfg.obs_dim() * cfg.embed)
            .into_iter()
            .map(|x| x * table_std)
            .collect();
        let glorot = |rng: &mut SplitRng, rows: usize, cols: usize| {
            let std = 1.0 / (rows as f64).sqrt();
            let data = rng.normals(rows * cols).into_iter().map(|x| x * std).collect();
            Param::new(Tensor::matrix(rows, cols, data).expect("dims"))
        };
        Ok(Self {
            embed_table: Param::new(Tensor::matrix(cfg.obs_dim(), cfg.embed, table)?),
            embed_bias: Param::new(Tensor::zeros(&[1, cfg.embed])),
            encoder: Mlp::new(&[cfg.embed + cfg.scalars + dh, cfg.hidden, 2 * dz], 1.0, rng),
            gru_x: glorot(rng, dz + cfg.action_dim, 3 * dh),
            gru_h: glorot(rng, dh, 2 * dh),
            gru_hc: glorot(rng, dh, dh),
            gru_b: Param::new(Tensor::zeros(&[1, 3 * dh])),
            prior: Mlp::new(&[dh, cfg.hidden, 2 * dz], 1.0, rng),
            decoder: Mlp::new(&[f, cfg.hidden, cfg.cells * cfg.classes], 1.0, rng),
            reward: Mlp::new(&[f, cfg.hidden, 1], 0.0, rng),
            cont: Mlp::new(&[f, cfg.hidden, 1], 0.0, rng),
            cfg,
        })
    }

    /// Every weight zero; useful for analytic traces.
    pub fn zeros(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (dh, dz, f) = (cfg.deter, cfg.stoch, cfg.feature_dim());
        Ok(Self {
            embed_table: Param::new(Tensor::zeros(&[cfg.obs_dim(), cfg.embed])),
            embed_bias: Param::new(Tensor::zeros(&[1, cfg.embed])),
            encoder: Mlp::zeros(&[cfg.embed + cfg.scalars + dh, cfg.hidden, 2 * dz]),
            gru_x: Param::new(Tensor::zeros(&[dz + cfg.action_dim, 3 * dh])),
            gru_h: Param::new(Tensor::zeros(&[dh, 2 * dh])),
            gru_hc: Param::new(Tensor::zeros(&[dh, dh])),
            gru_b: Param::new(Tensor::zeros(&[1, 3 * dh])),
            prior: Mlp::zeros(&[dh, cfg.hidden, 2 * dz]),
            decoder: Mlp::zeros(&[f, cfg.hidden, cfg.cells * cfg.classes]),
            reward: Mlp::zeros(&[f, cfg.hidden, 1]),
            cont: Mlp::zeros(&[f, cfg.hidden, 1]),
            cfg,
        })
    }

    /// Binds every parameter onto `tape`; `trainable` selects gradient tracking.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundWorldModel {
        BoundWorldModel {
            cfg: self.cfg.clone(),
            embed_table: self.embed_table.bind(tape, trainable),
            embed_bias: self.embed_bias.bind(tape, trainable),
            encoder: self.encoder.bind(tape, trainable),
            gru_x: self.gru_x.bind(tape, trainable),
            gru_h: self.gru_h.bind(tape, trainable),
            gru_hc: self.gru_hc.bind(tape, trainable),
            gru_b: self.gru_b.bind(tape, trainable),
            prior: self.prior.bind(tape, trainable),
            decoder: self.decoder.bind(tape, trainable),
            reward: self.reward.bind(tape, trainable),
            cont: self.cont.bind(tape, trainable),
        }
    }
}

impl Parameters for WorldModel {
    fn params(&self) -> Vec<&Param> {
        let mut out = vec![
            &self.embed_table,
            &self.embed_bias,
            &self.gru_x,
            &self.gru_h,
            &self.gru_hc,
            &self.gru_b,
        ];
        for m in [&self.encoder, &self.prior, &self.decoder, &self.reward, &self.cont] {
            out.extend(m.params());
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = vec![
            &mut self.embed_table,
            &mut self.embed_bias,
            &mut self.gru_x,
            &mut self.gru_h,
            &mut self.gru_hc,
            &mut self.gru_b,
        ];
        for m in [
            &mut self.encoder,
            &mut self.prior,
            &mut self.decoder,
            &mut self.reward,
            &mut self.cont,
        ] {
            out.extend(m.params_mut());
        }
        out
    }
}

/// The world model's parameters as tape variables, in [`Parameters::params`] order.
#[derive(Clone, Debug)]
pub struct BoundWorldModel {
    pub cfg: ModelConfig,
    embed_table: Var,
    embed_bias: Var,
    encoder: BoundMlp,
    gru_x: Var,
    gru_h: Var,
    gru_hc: Var,
    gru_b: Var,
    prior: BoundMlp,
    decoder: BoundMlp,
    reward: BoundMlp,
    cont: BoundMlp,
}

impl BoundWorldModel {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![
            self.embed_table,
            self.embed_bias,
            self.gru_x,
            self.gru_h,
            self.gru_hc,
            self.gru_b,
        ];
        for m in [&self.encoder, &self.prior, &self.decoder, &self.reward, &self.cont] {
            out.extend(m.vars());
        }
        out
    }

    /// Splits `[mean, raw]` into mean and `softplus(raw) + STD_FLOOR`.
    fn gaussian_head(&self, tape: &mut Tape, raw: Var) -> Result<(Var, Var)> {
        let dz = self.cfg.stoch;
        let mean = tape.slice_cols(raw, 0, dz)?;
        let s = tape.slice_cols(raw, dz, dz)?;
        let s = tape.softplus(s);
        Ok((mean, tape.add_const(s, STD_FLOOR)))
    }

    fn check_cols(&self, tape: &Tape, v: Var, expected: usize, what: &'static str) -> Result<()> {
        let got = tape.value(v).cols();
        if got != expected {
            return Err(ModelError::Shape { what, expected, got });
        }
        Ok(())
    }

    /// Observation embedding, `rows × embed`.
    pub fn embed(&self, tape: &mut Tape, obs: &ObsBatch) -> Result<Var> {
        let e = tape.gather_sum(self.embed_table, Arc::clone(&obs.active), self.cfg.active_per_obs())?;
        let e = tape.add_row(e, self.embed_bias)?;
        Ok(tape.tanh(e))
    }

    /// Posterior `(mean, std)` from a precomputed embedding and `h`.
    pub fn posterior(&self, tape: &mut Tape, embed: Var, scalars: Var, h: Var) -> Result<(Var, Var)> {
        self.check_cols(tape, h, self.cfg.deter, "h width")?;
        let x = tape.concat_cols(&[embed, scalars, h])?;
        let raw = self.encoder.forward(tape, x)?;
        self.gaussian_head(tape, raw)
    }

    /// Posterior `(mean, std)` of `z` given the observation and `h`.
    pub fn encode(&self, tape: &mut Tape, obs: &ObsBatch, h: Var) -> Result<(Var, Var)> {
        if tape.value(h).rows() != obs.rows {
            return Err(ModelError::Shape {
                what: "h rows",
                expected: obs.rows,
                got: tape.value(h).rows(),
            });
        }
        let e = self.embed(tape, obs)?;
        let s = tape.constant(obs.scalars.clone());
        self.posterior(tape, e, s, h)
    }

    /// One gated-recurrent step over `[z_prev, a_prev]`.
    pub fn sequence_step(&self, tape: &mut Tape, h: Var, z: Var, a: Var) -> Result<Var> {
        let dh = self.cfg.deter;
        self.check_cols(tape, h, dh, "h width")?;
        self.check_cols(tape, z, self.cfg.stoch, "z width")?;
        self.check_cols(tape, a, self.cfg.action_dim, "action width")?;
        let x = tape.concat_cols(&[z, a])?;
        let xw = tape.matmul(x, self.gru_x)?;
        let xw = tape.add_row(xw, self.gru_b)?;
        let x_gates = tape.slice_cols(xw, 0, 2 * dh)?;
        let x_cand = tape.slice_cols(xw, 2 * dh, dh)?;
        let h_gates = tape.matmul(h, self.gru_h)?;
        let gates = tape.add(x_gates, h_gates)?;
        let gates = tape.sigmoid(gates);
        let update = tape.slice_cols(gates, 0, dh)?;
        let reset = tape.slice_cols(gates, dh, dh)?;
        let rh = tape.mul(reset, h)?;
        let h_cand = tape.matmul(rh, self.gru_hc)?;
        let cand = tape.add(x_cand, h_cand)?;
        let cand = tape.tanh(cand);
        // u ⊙ h + (1 − u) ⊙ c, written as c + u ⊙ (h − c)
        let diff = tape.sub(h, cand)?;
        let keep = tape.mul(update, diff)?;
        Ok(tape.add(cand, keep)?)
    }

    /// Transition prior `(mean, std)` from `h` alone.
    pub fn prior(&self, tape: &mut Tape, h: Var) -> Result<(Var, Var)> {
        self.check_cols(tape, h, self.cfg.deter, "h width")?;
        let raw = self.prior.forward(tape, h)?;
        self.gaussian_head(tape, raw)
    }

    pub fn feature(&self, tape: &mut Tape, h: Var, z: Var) -> Result<Var> {
        Ok(tape.concat_cols(&[h, z])?)
    }

    /// Per-cell class logits, cell-major.
    pub fn decode(&self, tape: &mut Tape, feature: Var) -> Result<Var> {
        Ok(self.decoder.forward(tape, feature)?)
    }

    pub fn predict_reward(&self, tape: &mut Tape, feature: Var) -> Result<Var> {
        Ok(self.reward.forward(tape, feature)?)
    }

    /// Continuation logit; `sigmoid` of it is the probability the episode continues.
    pub fn continuation_logit(&self, tape: &mut Tape, feature: Var) -> Result<Var> {
        Ok(self.cont.forward(tape, feature)?)
    }
}
