use std::collections::VecDeque;
use std::sync::Arc;

use curio_agent::mix_rewards;
use curio_diffcore::{SplitRng, Tensor};
use curio_drivesim::{EgoObservation, Frame, Task, STACK};
use curio_rssm::{ModelConfig, ObsBatch, SequenceBatch};

use crate::error::{PipelineError, Result};

/// One stored step: the observation that arrived and what led to it.
///
/// Only the newest frame is stored; the frame stack is rebuilt from the
/// episode's earlier records (the first frame repeats at episode start, as
/// in the environment).
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub frame: Frame,
    pub speed_norm: f64,
    pub prev_steer: f64,
    /// Action that produced this observation; zero for the reset observation.
    pub action: [f64; 2],
    /// Extrinsic reward of the transition for every task.
    pub r_ext: [f64; 3],
    /// Disagreement reward computed when the action was taken.
    pub r_int: f64,
    /// `false` exactly when this observation is terminal.
    pub cont: bool,
    pub episode: u64,
    pub step: u32,
}

impl TransitionRecord {
    /// Record for a reset observation.
    pub fn first(obs: &EgoObservation, episode: u64) -> Self {
        Self {
            frame: Arc::clone(&obs.frames[STACK - 1]),
            speed_norm: obs.speed_norm,
            prev_steer: obs.prev_steer,
            action: [0.0; 2],
            r_ext: [0.0; 3],
            r_int: 0.0,
            cont: true,
            episode,
            step: 0,
        }
    }

    /// Reward-head target: `mix_rewards` weights the extrinsic term, so the
    /// intrinsic weight `w_int` enters as `1 − w_int`.
    pub fn reward(&self, task: Task, w_int: f64) -> Result<f64> {
        Ok(mix_rewards(self.r_ext[task.index()], self.r_int, 1.0 - w_int)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: u64,
    pub records: Vec<TransitionRecord>,
}

/// Where a sampled sequence starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeqRef {
    /// Index into [`ReplayBuffer::episodes`] at sampling time.
    pub episode: usize,
    pub offset: usize,
}

/// FIFO store of whole episodes, bounded by a transition count.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    len: usize,
    episodes: VecDeque<Episode>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            len: 0,
            episodes: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored transitions.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn episodes(&self) -> &VecDeque<Episode> {
        &self.episodes
    }

    /// Appends to the episode named by `rec.episode`, opening a new one if it
    /// differs from the newest. Oldest episodes are evicted whole to stay
    /// within capacity.
    pub fn push(&mut self, rec: TransitionRecord) -> Result<()> {
        let current = self.episodes.back().map(|e| e.id);
        let current_len = match current {
            Some(id) if id == rec.episode => self.episodes.back().map_or(0, |e| e.records.len()),
            _ => 0,
        };
        if current_len + 1 > self.capacity {
            return Err(PipelineError::EpisodeTooLong {
                len: current_len + 1,
                capacity: self.capacity,
            });
        }
        while self.len + 1 > self.capacity {
            let old = self.episodes.pop_front().expect("len > 0 implies an episode");
            self.len -= old.records.len();
        }
        if current == Some(rec.episode) && current_len > 0 {
            self.episodes.back_mut().expect("checked").records.push(rec);
        } else {
            self.episodes.push_back(Episode {
                id: rec.episode,
                records: vec![rec],
            });
        }
        self.len += 1;
        Ok(())
    }

    /// Number of valid `(episode, offset)` starts for length `seq_len`.
    pub fn valid_starts(&self, seq_len: usize) -> usize {
        self.episodes
            .iter()
            .map(|e| (e.records.len() + 1).saturating_sub(seq_len))
            .sum()
    }

    /// `batch` starts drawn uniformly over all valid `(episode, offset)` pairs.
    pub fn sample(&self, batch: usize, seq_len: usize, rng: &mut SplitRng) -> Result<Vec<SeqRef>> {
        let total = self.valid_starts(seq_len);
        if total == 0 || seq_len == 0 {
            return Err(PipelineError::WarmupNotMet {
                needed: seq_len,
                longest: self.episodes.iter().map(|e| e.records.len()).max().unwrap_or(0),
            });
        }
        Ok((0..batch).map(|_| self.locate(rng.below(total), seq_len)).collect())
    }

    fn locate(&self, mut u: usize, seq_len: usize) -> SeqRef {
        for (i, e) in self.episodes.iter().enumerate() {
            let n = (e.records.len() + 1).saturating_sub(seq_len);
            if u < n {
                return SeqRef { episode: i, offset: u };
            }
            u -= n;
        }
        unreachable!("draw below the number of valid starts")
    }

    /// The records of one sampled sequence.
    pub fn sequence(&self, r: SeqRef, seq_len: usize) -> &[TransitionRecord] {
        &self.episodes[r.episode].records[r.offset..r.offset + seq_len]
    }

    /// Time-major training batch (row `t·B + b`) for the sampled starts.
    pub fn build_batch(
        &self,
        refs: &[SeqRef],
        seq_len: usize,
        cfg: &ModelConfig,
        task: Task,
        w_int: f64,
    ) -> Result<SequenceBatch> {
        let b = refs.len();
        let rows = b * seq_len;
        let cells = cfg.cells;
        let mut active = Vec::with_capacity(rows * cfg.active_per_obs());
        let mut scalars = Vec::with_capacity(rows * 2);
        let mut target = Vec::with_capacity(rows * cells);
        let mut actions = Vec::with_capacity(rows * 2);
        let mut rewards = Vec::with_capacity(rows);
        let mut cont = Vec::with_capacity(rows);
        for t in 0..seq_len {
            for r in refs {
                let records = &self.episodes[r.episode].records;
                let i = r.offset + t;
                let rec = &records[i];
                for slot in 0..STACK {
                    let j = (i + slot + 1).saturating_sub(STACK);
                    push_onehot(&mut active, &records[j].frame, slot, cells, cfg.classes);
                }
                scalars.extend_from_slice(&[rec.speed_norm, rec.prev_steer]);
                target.extend_from_slice(&rec.frame);
                actions.extend_from_slice(&rec.action);
                rewards.push(rec.reward(task, w_int)?);
                cont.push(if rec.cont { 1.0 } else { 0.0 });
            }
        }
        let obs = ObsBatch::new(cfg, active, scalars, target)?;
        Ok(SequenceBatch::new(
            b,
            obs,
            Tensor::matrix(rows, 2, actions)?,
            Tensor::matrix(rows, 1, rewards)?,
            Tensor::matrix(rows, 1, cont)?,
        )?)
    }
}

fn push_onehot(out: &mut Vec<u32>, frame: &[u8], slot: usize, cells: usize, classes: usize) {
    for (c, &class) in frame.iter().enumerate() {
        out.push(((slot * cells + c) * classes + class as usize) as u32);
    }
}

/// A single observation in the model's sparse input form.
pub fn obs_batch(cfg: &ModelConfig, obs: &EgoObservation) -> Result<ObsBatch> {
    let mut active = Vec::with_capacity(cfg.active_per_obs());
    obs.extend_onehot(&mut active);
    Ok(ObsBatch::new(cfg, active, obs.scalars().to_vec(), obs.newest().to_vec())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(episode: u64, step: u32) -> TransitionRecord {
        TransitionRecord {
            frame: vec![(step % 6) as u8; 4].into(),
            speed_norm: step as f64,
            prev_steer: 0.0,
            action: [0.0; 2],
            r_ext: [1.0, 2.0, 3.0],
            r_int: 0.5,
            cont: true,
            episode,
            step,
        }
    }

    fn filled(lengths: &[usize], capacity: usize) -> ReplayBuffer {
        let mut buf = ReplayBuffer::new(capacity);
        for (e, &n) in lengths.iter().enumerate() {
            for s in 0..n {
                buf.push(rec(e as u64, s as u32)).unwrap();
            }
        }
        buf
    }

    #[test]
    fn eviction_removes_whole_oldest_episodes() {
        let buf = filled(&[4, 3, 5], 9);
        assert!(buf.len() <= 9);
        let ids: Vec<u64> = buf.episodes().iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1, 2]);
        for e in buf.episodes() {
            assert_eq!(e.records.first().unwrap().step, 0);
        }
    }

    #[test]
    fn oversized_episode_is_rejected() {
        let mut buf = filled(&[3], 3);
        assert!(matches!(buf.push(rec(0, 3)), Err(PipelineError::EpisodeTooLong { .. })));
    }

    #[test]
    fn exact_length_episode_is_always_the_sample() {
        let buf = filled(&[2, 5], 100);
        let mut rng = SplitRng::seed_from(1);
        for r in buf.sample(20, 5, &mut rng).unwrap() {
            assert_eq!(r, SeqRef { episode: 1, offset: 0 });
        }
    }

    #[test]
    fn too_long_sequences_are_a_warmup_error() {
        let buf = filled(&[4, 6], 100);
        let mut rng = SplitRng::seed_from(1);
        match buf.sample(1, 7, &mut rng) {
            Err(PipelineError::WarmupNotMet { needed: 7, longest: 6 }) => {}
            other => panic!("{other:?}"),
        }
        assert!(ReplayBuffer::new(5).sample(1, 1, &mut rng).is_err());
    }

    #[test]
    fn sequences_stay_inside_one_episode() {
        let buf = filled(&[7, 3, 9, 5], 100);
        let mut rng = SplitRng::seed_from(2);
        for r in buf.sample(500, 4, &mut rng).unwrap() {
            let seq = buf.sequence(r, 4);
            assert!(seq.iter().all(|x| x.episode == seq[0].episode));
            assert!(seq.windows(2).all(|w| w[1].step == w[0].step + 1));
        }
    }

    #[test]
    fn mixed_reward_endpoints() {
        let r = rec(0, 1);
        assert_eq!(r.reward(Task::CollisionAvoid, 0.0).unwrap(), 2.0);
        assert_eq!(r.reward(Task::CollisionAvoid, 1.0).unwrap(), 0.5);
    }
}
