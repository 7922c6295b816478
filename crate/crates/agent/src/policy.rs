use curio_diffcore::{BoundMlp, Mlp, Param, Parameters, SplitRng, Tape, Tensor, Var};

use crate::error::Result;

pub const STD_MIN: f64 = 0.05;
pub const STD_MAX: f64 = 2.0;
const HALF_LN_2PI_E: f64 = 1.418_938_533_204_672_7;

/// Squashed-Gaussian policy over `concat(h, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Actor {
    pub net: Mlp,
    pub action_dim: usize,
}

#[derive(Clone, Debug)]
pub struct BoundActor {
    net: BoundMlp,
    action_dim: usize,
}

impl Actor {
    /// Zero-initialized output layer: starts with mean 0 and a mid-range std.
    pub fn new(feature_dim: usize, action_dim: usize, hidden: usize, rng: &mut SplitRng) -> Self {
        Self {
            net: Mlp::new(&[feature_dim, hidden, hidden, 2 * action_dim], 0.0, rng),
            action_dim,
        }
    }

    pub fn zeros(feature_dim: usize, action_dim: usize, hidden: usize) -> Self {
        Self {
            net: Mlp::zeros(&[feature_dim, hidden, hidden, 2 * action_dim]),
            action_dim,
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundActor {
        BoundActor {
            net: self.net.bind(tape, trainable),
            action_dim: self.action_dim,
        }
    }

    /// Greedy mode returns `tanh(mean)`; stochastic mode samples the squashed Gaussian.
    pub fn act(&self, feature: &[f64], greedy: bool, rng: &mut SplitRng) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let actor = self.bind(&mut tape, false);
        let f = tape.constant(Tensor::row(feature.to_vec()));
        let (mean, std) = actor.dist(&mut tape, f)?;
        let pre = if greedy {
            mean
        } else {
            let eps = tape.constant(Tensor::row(rng.normals(self.action_dim)));
            tape.gaussian_sample(mean, std, eps)?
        };
        let a = tape.tanh(pre);
        Ok(tape.value(a).data().to_vec())
    }
}

impl Parameters for Actor {
    fn params(&self) -> Vec<&Param> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }
}

impl BoundActor {
    pub fn vars(&self) -> Vec<Var> {
        self.net.vars()
    }

    /// Pre-squash `(mean, std)` with `std ∈ [STD_MIN, STD_MAX]`.
    pub fn dist(&self, tape: &mut Tape, feature: Var) -> Result<(Var, Var)> {
        let out = self.net.forward(tape, feature)?;
        let mean = tape.slice_cols(out, 0, self.action_dim)?;
        let raw = tape.slice_cols(out, self.action_dim, self.action_dim)?;
        let s = tape.sigmoid(raw);
        let s = tape.scale(s, STD_MAX - STD_MIN);
        Ok((mean, tape.add_const(s, STD_MIN)))
    }

    /// Reparameterized squashed sample and the pre-squash Gaussian entropy (`rows × 1`).
    pub fn sample(&self, tape: &mut Tape, feature: Var, noise: Var) -> Result<(Var, Var)> {
        let (mean, std) = self.dist(tape, feature)?;
        let pre = tape.gaussian_sample(mean, std, noise)?;
        let action = tape.tanh(pre);
        let log_std = tape.log(std);
        let ent = tape.sum_cols(log_std);
        let ent = tape.add_const(ent, self.action_dim as f64 * HALF_LN_2PI_E);
        Ok((action, ent))
    }
}

/// State-value estimate over `concat(h, z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn new(feature_dim: usize, hidden: usize, rng: &mut SplitRng) -> Self {
        Self {
            net: Mlp::new(&[feature_dim, hidden, hidden, 1], 0.0, rng),
        }
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        self.net.bind(tape, trainable)
    }

    pub fn value(&self, feature: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let net = self.bind(&mut tape, false);
        let f = tape.constant(Tensor::row(feature.to_vec()));
        let v = net.forward(&mut tape, f)?;
        Ok(tape.value(v).item())
    }
}

impl Parameters for Critic {
    fn params(&self) -> Vec<&Param> {
        self.net.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }
}
