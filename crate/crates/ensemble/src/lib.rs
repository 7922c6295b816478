//! `K` independently initialized forward models predicting the next latent
//! mean from `(concat(h, z), action)`. Their population variance, averaged
//! over latent dimensions, is the intrinsic reward: large where the members
//! have not yet been trained into agreement.

use curio_diffcore::{collect_grads, AdamState, BoundMlp, DiffError, Mlp, Parameters, SplitRng, Tape, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("disagreement needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

pub type Result<T> = std::result::Result<T, EnsembleError>;

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 8,
            hidden: vec![128],
            lr: 1e-4,
        }
    }
}

/// Population variance across members, averaged over dimensions.
pub fn disagreement(preds: &[&[f64]]) -> Result<f64> {
    let k = preds.len();
    if k < 2 {
        return Err(EnsembleError::TooFewMembers(k));
    }
    let d = preds[0].len();
    if let Some(bad) = preds.iter().find(|p| p.len() != d) {
        return Err(EnsembleError::Shape {
            what: "prediction width",
            expected: d,
            got: bad.len(),
        });
    }
    // pairwise form of the population variance: exactly zero when all members agree
    let mut total = 0.0;
    for j in 0..d {
        for a in 0..k {
            for b in a + 1..k {
                total += (preds[a][j] - preds[b][j]).powi(2);
            }
        }
    }
    Ok(total / (k * k) as f64 / d as f64)
}

/// [`disagreement`] for every row of `K` prediction matrices.
pub fn disagreement_rows(preds: &[Tensor]) -> Result<Vec<f64>> {
    if preds.len() < 2 {
        return Err(EnsembleError::TooFewMembers(preds.len()));
    }
    (0..preds[0].rows())
        .map(|r| {
            let rows: Vec<&[f64]> = preds.iter().map(|p| p.row_slice(r)).collect();
            disagreement(&rows)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub cfg: EnsembleConfig,
    pub members: Vec<Mlp>,
    /// One optimizer per member; a member is only ever written through its own state.
    pub opts: Vec<AdamState>,
}

/// Members bound onto a tape.
#[derive(Clone, Debug)]
pub struct BoundEnsemble {
    pub members: Vec<BoundMlp>,
}

impl Ensemble {
    /// Member `k` is initialized from its own seed derived from `(seed, k)`.
    pub fn new(cfg: EnsembleConfig, input_dim: usize, output_dim: usize, seed: u64) -> Result<Self> {
        if cfg.members < 2 {
            return Err(EnsembleError::TooFewMembers(cfg.members));
        }
        let mut sizes = vec![input_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(output_dim);
        let members = (0..cfg.members as u64)
            .map(|k| {
                let mut rng = SplitRng::seed_from(seed ^ (k + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
                Mlp::new(&sizes, 1.0, &mut rng)
            })
            .collect();
        Ok(Self::from_members(cfg, members))
    }

    /// Wraps explicit members with fresh optimizer states.
    pub fn from_members(mut cfg: EnsembleConfig, members: Vec<Mlp>) -> Self {
        cfg.members = members.len();
        let opts = members.iter().map(|m| AdamState::for_params(&m.params())).collect();
        Self { cfg, members, opts }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.members[0].output_dim()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundEnsemble {
        BoundEnsemble {
            members: self.members.iter().map(|m| m.bind(tape, trainable)).collect(),
        }
    }

    fn check_inputs(&self, feature: &Tensor, action: &Tensor) -> Result<()> {
        let width = feature.cols() + action.cols();
        if width != self.input_dim() {
            return Err(EnsembleError::Shape {
                what: "member input width",
                expected: self.input_dim(),
                got: width,
            });
        }
        if feature.rows() != action.rows() {
            return Err(EnsembleError::Shape {
                what: "action rows",
                expected: feature.rows(),
                got: action.rows(),
            });
        }
        Ok(())
    }

    /// Every member's prediction for each row of `(feature, action)`.
    pub fn predict_all(&self, feature: &Tensor, action: &Tensor) -> Result<Vec<Tensor>> {
        self.check_inputs(feature, action)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let f = tape.constant(feature.clone());
        let a = tape.constant(action.clone());
        let x = tape.concat_cols(&[f, a])?;
        bound
            .members
            .iter()
            .map(|m| {
                let y = m.forward(&mut tape, x)?;
                Ok(tape.value(y).clone())
            })
            .collect()
    }

    /// Intrinsic reward per row.
    pub fn intrinsic_rewards(&self, feature: &Tensor, action: &Tensor) -> Result<Vec<f64>> {
        disagreement_rows(&self.predict_all(feature, action)?)
    }

    /// Intrinsic reward of a single `(concat(h, z), action)` pair.
    pub fn intrinsic_reward(&self, feature: &[f64], action: &[f64]) -> Result<f64> {
        let r = self.intrinsic_rewards(&Tensor::row(feature.to_vec()), &Tensor::row(action.to_vec()))?;
        Ok(r[0])
    }

    /// One Adam step per member on its mean squared error to `target`
    /// (treated as a constant). Returns the summed pre-update loss.
    pub fn train_step(&mut self, feature: &Tensor, action: &Tensor, target: &Tensor) -> Result<f64> {
        let mut total = 0.0;
        for k in 0..self.members.len() {
            total += self.train_member(k, feature, action, target)?;
        }
        Ok(total)
    }

    /// One Adam step on member `k` alone; returns its pre-update loss.
    pub fn train_member(&mut self, k: usize, feature: &Tensor, action: &Tensor, target: &Tensor) -> Result<f64> {
        self.check_inputs(feature, action)?;
        if target.cols() != self.output_dim() || target.rows() != feature.rows() {
            return Err(EnsembleError::Shape {
                what: "target shape",
                expected: feature.rows() * self.output_dim(),
                got: target.len(),
            });
        }
        let member = &mut self.members[k];
        let (value, grads) = {
            let mut tape = Tape::new();
            let bound = member.bind(&mut tape, true);
            let f = tape.constant(feature.clone());
            let a = tape.constant(action.clone());
            let x = tape.concat_cols(&[f, a])?;
            let loss = member_loss(&mut tape, &bound, x, target)?;
            tape.backward(loss)?;
            (tape.value(loss).item(), collect_grads(&tape, &bound.vars()))
        };
        self.opts[k].step(&mut member.params_mut(), &grads, self.cfg.lr);
        Ok(value)
    }

    /// Summed per-member mean squared error, without updating.
    pub fn loss(&self, feature: &Tensor, action: &Tensor, target: &Tensor) -> Result<f64> {
        let preds = self.predict_all(feature, action)?;
        Ok(preds
            .iter()
            .map(|p| p.data().iter().zip(target.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64)
            .sum())
    }
}

/// Mean squared error of one member's prediction.
pub fn member_loss(tape: &mut Tape, member: &BoundMlp, x: Var, target: &Tensor) -> Result<Var> {
    let p = member.forward(tape, x)?;
    let t = tape.constant(target.clone());
    let d = tape.sub(p, t)?;
    let d2 = tape.square(d);
    Ok(tape.mean(d2))
}

impl BoundEnsemble {
    /// Differentiable disagreement per row (`rows × 1`) for inputs `x = concat(feature, action)`.
    pub fn disagreement(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let k = self.members.len();
        if k < 2 {
            return Err(EnsembleError::TooFewMembers(k));
        }
        let preds = self
            .members
            .iter()
            .map(|m| m.forward(tape, x))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let mut sum = preds[0];
        for &p in &preds[1..] {
            sum = tape.add(sum, p)?;
        }
        let mean = tape.scale(sum, 1.0 / k as f64);
        let mut sq = None;
        for &p in &preds {
            let d = tape.sub(p, mean)?;
            let d2 = tape.square(d);
            sq = Some(match sq {
                None => d2,
                Some(acc) => tape.add(acc, d2)?,
            });
        }
        let dims = tape.value(mean).cols();
        let var = tape.scale(sq.expect("k >= 2"), 1.0 / k as f64);
        let per_row = tape.sum_cols(var);
        Ok(tape.scale(per_row, 1.0 / dims as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_cases() {
        let same = [&[0.3, -1.0][..], &[0.3, -1.0], &[0.3, -1.0]];
        assert_eq!(disagreement(&same).unwrap(), 0.0);
        assert_eq!(disagreement(&[&[0.0][..], &[2.0]]).unwrap(), 1.0);
        let four = [&[0.0, 0.0][..], &[1.0, 1.0], &[2.0, 0.0], &[3.0, 1.0]];
        assert!((disagreement(&four).unwrap() - 0.75).abs() < 1e-12);
        assert!(matches!(disagreement(&[&[1.0][..]]), Err(EnsembleError::TooFewMembers(1))));
    }
}
