//! Single-file checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "CURIOCKP"
//! version   u32
//! blocks    u32
//! manifest  per block: name_len u16, name, dtype u8, ndim u8, dims u64 × ndim, offset u64, nbytes u64
//! payload   raw block bytes, offsets relative to the payload start
//! checksum  u64 FNV-1a over every preceding byte
//! ```
//!
//! Block dtypes are `f64` (parameters, optimizer moments, continuous state),
//! `u64` (counters) and `u8` (frames, RNG seeds, config text). Blocks are
//! written in a fixed order, so saving the same state twice gives identical bytes.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use curio_agent::ActorCritic;
use curio_diffcore::{AdamState, Param, Parameters, RngState, SplitRng};
use curio_drivesim::{DriveEnv, EnvSnapshot, EventHistory, Frame, TrackLayout, VehicleState, CELLS, STACK};
use curio_ensemble::Ensemble;
use curio_rssm::LatentState;

use crate::config::{fnv1a, Config};
use crate::error::{PipelineError, Result};
use crate::metrics::{IntervalStats, Phase};
use crate::replay::{ReplayBuffer, TransitionRecord};
use crate::trainer::{layout_seed, Counters, Trainer};

pub const MAGIC: &[u8; 8] = b"CURIOCKP";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F64 = 0,
    U64 = 1,
    U8 = 2,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 | Dtype::U64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub bytes: Vec<u8>,
}

/// Ordered collection of named blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    blocks: Vec<Block>,
    index: HashMap<String, usize>,
}

impl Archive {
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    fn put(&mut self, name: impl Into<String>, dtype: Dtype, shape: Vec<usize>, bytes: Vec<u8>) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate block {name}");
        self.index.insert(name.clone(), self.blocks.len());
        self.blocks.push(Block {
            name,
            dtype,
            shape,
            bytes,
        });
    }

    pub fn put_f64(&mut self, name: impl Into<String>, shape: Vec<usize>, data: &[f64]) {
        self.put(name, Dtype::F64, shape, data.iter().flat_map(|v| v.to_le_bytes()).collect());
    }

    pub fn put_u64(&mut self, name: impl Into<String>, data: &[u64]) {
        self.put(name, Dtype::U64, vec![data.len()], data.iter().flat_map(|v| v.to_le_bytes()).collect());
    }

    pub fn put_u8(&mut self, name: impl Into<String>, shape: Vec<usize>, data: &[u8]) {
        self.put(name, Dtype::U8, shape, data.to_vec());
    }

    fn block(&self, name: &str, dtype: Dtype) -> Result<&Block> {
        let b = self
            .index
            .get(name)
            .map(|&i| &self.blocks[i])
            .ok_or_else(|| PipelineError::Corrupt(format!("missing block `{name}`")))?;
        if b.dtype != dtype {
            return Err(PipelineError::Corrupt(format!("block `{name}` has dtype {:?}", b.dtype)));
        }
        Ok(b)
    }

    pub fn get_f64(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let b = self.block(name, Dtype::F64)?;
        let data = b
            .bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok((b.shape.clone(), data))
    }

    pub fn get_u64(&self, name: &str) -> Result<Vec<u64>> {
        let b = self.block(name, Dtype::U64)?;
        Ok(b.bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    pub fn get_u8(&self, name: &str) -> Result<&[u8]> {
        Ok(&self.block(name, Dtype::U8)?.bytes)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for b in &self.blocks {
            out.extend_from_slice(&(b.name.len() as u16).to_le_bytes());
            out.extend_from_slice(b.name.as_bytes());
            out.push(b.dtype as u8);
            out.push(b.shape.len() as u8);
            for &d in &b.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(b.bytes.len() as u64).to_le_bytes());
            offset += b.bytes.len() as u64;
        }
        for b in &self.blocks {
            out.extend_from_slice(&b.bytes);
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |m: &str| PipelineError::Corrupt(m.to_string());
        if bytes.len() < MAGIC.len() + 16 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(body) != u64::from_le_bytes(tail.try_into().expect("8 bytes")) {
            return Err(corrupt("checksum mismatch (truncated or damaged file)"));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(PipelineError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = r.u16()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| corrupt("block name is not UTF-8"))?;
            let dtype = match r.u8()? {
                0 => Dtype::F64,
                1 => Dtype::U64,
                2 => Dtype::U8,
                _ => return Err(corrupt("unknown dtype")),
            };
            let ndim = r.u8()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let offset = r.u64()? as usize;
            let nbytes = r.u64()? as usize;
            let elems: usize = shape.iter().product();
            if elems.checked_mul(dtype.width()) != Some(nbytes) {
                return Err(corrupt(&format!("block `{name}` size disagrees with its shape")));
            }
            entries.push((name, dtype, shape, offset, nbytes));
        }
        let payload = &body[r.pos..];
        let mut archive = Archive::default();
        for (name, dtype, shape, offset, nbytes) in entries {
            let end = offset.checked_add(nbytes).filter(|&e| e <= payload.len());
            let end = end.ok_or_else(|| corrupt(&format!("block `{name}` runs past the end of the file")))?;
            if archive.index.contains_key(&name) {
                return Err(corrupt(&format!("duplicate block `{name}`")));
            }
            archive.put(name, dtype, shape, payload[offset..end].to_vec());
        }
        Ok(archive)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| PipelineError::Corrupt("manifest runs past the end of the file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

fn put_params(ar: &mut Archive, prefix: &str, params: &[&Param]) {
    for (i, p) in params.iter().enumerate() {
        let t = p.tensor();
        ar.put_f64(format!("{prefix}.param.{i}"), t.shape().to_vec(), t.data());
    }
}

fn get_params(ar: &Archive, prefix: &str, params: &mut [&mut Param]) -> Result<()> {
    for (i, p) in params.iter_mut().enumerate() {
        let name = format!("{prefix}.param.{i}");
        let (shape, data) = ar.get_f64(&name)?;
        if shape != p.tensor().shape() {
            return Err(PipelineError::Corrupt(format!(
                "block `{name}` has shape {shape:?}, expected {:?}",
                p.tensor().shape()
            )));
        }
        p.make_mut().data_mut().copy_from_slice(&data);
    }
    Ok(())
}

fn put_adam(ar: &mut Archive, prefix: &str, opt: &AdamState) {
    ar.put_u64(format!("{prefix}.adam.t"), &[opt.t]);
    for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        ar.put_f64(format!("{prefix}.adam.m.{i}"), vec![m.len()], m);
        ar.put_f64(format!("{prefix}.adam.v.{i}"), vec![v.len()], v);
    }
}

fn get_adam(ar: &Archive, prefix: &str, opt: &mut AdamState) -> Result<()> {
    opt.t = one(ar, &format!("{prefix}.adam.t"))?;
    for i in 0..opt.m.len() {
        for (kind, dst) in [("m", &mut opt.m[i]), ("v", &mut opt.v[i])] {
            let name = format!("{prefix}.adam.{kind}.{i}");
            let (_, data) = ar.get_f64(&name)?;
            if data.len() != dst.len() {
                return Err(PipelineError::Corrupt(format!("block `{name}` has the wrong length")));
            }
            dst.copy_from_slice(&data);
        }
    }
    Ok(())
}

fn one(ar: &Archive, name: &str) -> Result<u64> {
    exact::<1>(ar.get_u64(name)?, name).map(|[v]| v)
}

fn exact<const N: usize>(v: Vec<u64>, name: &str) -> Result<[u64; N]> {
    v.try_into()
        .map_err(|_| PipelineError::Corrupt(format!("block `{name}` should hold {N} values")))
}

fn f64s<const N: usize>(ar: &Archive, name: &str) -> Result<[f64; N]> {
    ar.get_f64(name)?
        .1
        .try_into()
        .map_err(|_| PipelineError::Corrupt(format!("block `{name}` should hold {N} values")))
}

fn put_rng(ar: &mut Archive, name: &str, rng: &SplitRng) {
    let s = rng.state();
    let mut bytes = s.seed.to_vec();
    bytes.extend_from_slice(&s.stream.to_le_bytes());
    bytes.extend_from_slice(&s.word_pos.to_le_bytes());
    ar.put_u8(name, vec![bytes.len()], &bytes);
}

fn get_rng(ar: &Archive, name: &str) -> Result<SplitRng> {
    let b = ar.get_u8(name)?;
    if b.len() != 56 {
        return Err(PipelineError::Corrupt(format!("block `{name}` is not an RNG state")));
    }
    Ok(SplitRng::from_state(RngState {
        seed: b[..32].try_into().expect("32 bytes"),
        stream: u64::from_le_bytes(b[32..40].try_into().expect("8 bytes")),
        word_pos: u128::from_le_bytes(b[40..56].try_into().expect("16 bytes")),
    }))
}

const RECORD_F64: usize = 9;

fn put_buffer(ar: &mut Archive, buf: &ReplayBuffer) {
    let mut episodes = Vec::new();
    let mut frames = Vec::with_capacity(buf.len() * CELLS);
    let mut floats = Vec::with_capacity(buf.len() * RECORD_F64);
    let mut steps = Vec::with_capacity(buf.len());
    for e in buf.episodes() {
        episodes.extend_from_slice(&[e.id, e.records.len() as u64]);
        for r in &e.records {
            frames.extend_from_slice(&r.frame);
            floats.extend_from_slice(&[r.speed_norm, r.prev_steer, r.action[0], r.action[1]]);
            floats.extend_from_slice(&r.r_ext);
            floats.push(r.r_int);
            floats.push(if r.cont { 1.0 } else { 0.0 });
            steps.push(r.step as u64);
        }
    }
    ar.put_u64("buffer.episodes", &episodes);
    ar.put_u8("buffer.frames", vec![buf.len(), CELLS], &frames);
    ar.put_f64("buffer.values", vec![buf.len(), RECORD_F64], &floats);
    ar.put_u64("buffer.steps", &steps);
}

fn get_buffer(ar: &Archive, capacity: usize) -> Result<ReplayBuffer> {
    let episodes = ar.get_u64("buffer.episodes")?;
    let frames = ar.get_u8("buffer.frames")?;
    let (_, floats) = ar.get_f64("buffer.values")?;
    let steps = ar.get_u64("buffer.steps")?;
    let total: u64 = episodes.chunks(2).map(|c| c.get(1).copied().unwrap_or(0)).sum();
    let n = steps.len();
    if episodes.len() % 2 != 0 || total as usize != n || frames.len() != n * CELLS || floats.len() != n * RECORD_F64 {
        return Err(PipelineError::Corrupt("replay blocks disagree in length".into()));
    }
    let mut buf = ReplayBuffer::new(capacity);
    let mut i = 0;
    for ep in episodes.chunks(2) {
        for _ in 0..ep[1] {
            let f = &floats[i * RECORD_F64..(i + 1) * RECORD_F64];
            let frame: Frame = Arc::from(&frames[i * CELLS..(i + 1) * CELLS]);
            buf.push(TransitionRecord {
                frame,
                speed_norm: f[0],
                prev_steer: f[1],
                action: [f[2], f[3]],
                r_ext: [f[4], f[5], f[6]],
                r_int: f[7],
                cont: f[8] != 0.0,
                episode: ep[0],
                step: steps[i] as u32,
            })?;
            i += 1;
        }
    }
    Ok(buf)
}

/// Serializes the complete state of `trainer`.
pub fn to_archive(trainer: &Trainer) -> Archive {
    let mut ar = Archive::default();
    let cfg_text = trainer.cfg.to_text();
    ar.put_u8("config", vec![cfg_text.len()], cfg_text.as_bytes());
    ar.put_u64("fingerprint", &[trainer.cfg.fingerprint()]);
    let c = &trainer.counters;
    ar.put_u64(
        "counters",
        &[
            c.env_steps,
            c.phase_steps,
            c.updates,
            c.episode,
            c.layout_epoch,
            trainer.need_reset as u64,
            trainer.relayout as u64,
            (trainer.phase == Phase::Finetune) as u64,
            trainer.task.index() as u64,
        ],
    );
    put_rng(&mut ar, "rng.act", &trainer.act_rng);
    put_rng(&mut ar, "rng.train", &trainer.train_rng);

    put_params(&mut ar, "wm", &trainer.wm.params());
    put_adam(&mut ar, "wm", &trainer.wm_opt);
    for (k, (m, opt)) in trainer.ensemble.members.iter().zip(&trainer.ensemble.opts).enumerate() {
        put_params(&mut ar, &format!("ensemble.{k}"), &m.params());
        put_adam(&mut ar, &format!("ensemble.{k}"), opt);
    }
    put_params(&mut ar, "actor", &trainer.ac.actor.params());
    put_adam(&mut ar, "actor", &trainer.ac.actor_opt);
    put_params(&mut ar, "critic", &trainer.ac.critic.params());
    put_adam(&mut ar, "critic", &trainer.ac.critic_opt);

    let l = &trainer.latent;
    for (name, v) in [("h", &l.h), ("z", &l.z), ("z_mean", &l.z_mean), ("z_std", &l.z_std)] {
        ar.put_f64(format!("latent.{name}"), vec![v.len()], v);
    }
    ar.put_f64("latent.prev_action", vec![2], &trainer.prev_action);

    let snap = trainer.env.snapshot();
    let s = snap.state;
    ar.put_f64("env.state", vec![5], &[s.x, s.y, s.heading, s.speed, snap.prev_steer]);
    ar.put_u64(
        "env.counters",
        &[
            snap.t as u64,
            snap.history.wrong_way_steps as u64,
            snap.history.stall_steps as u64,
            snap.done as u64,
        ],
    );
    let frames: Vec<u8> = snap.frames.iter().flat_map(|f| f.iter().copied()).collect();
    ar.put_u8("env.frames", vec![STACK, CELLS], &frames);

    let iv = &trainer.interval;
    let mut sums = iv.update_sums.to_vec();
    sums.extend_from_slice(&[iv.r_int_sum, iv.r_ext_sum]);
    ar.put_f64("interval.sums", vec![sums.len()], &sums);
    ar.put_u64("interval.counts", &[iv.updates, iv.steps]);

    put_buffer(&mut ar, &trainer.buffer);
    ar
}

/// Rebuilds a trainer. `cfg` must share the checkpoint's architecture; its
/// schedule settings replace the stored ones.
pub fn from_archive(ar: &Archive, cfg: &Config) -> Result<Trainer> {
    let stored_fp = one(ar, "fingerprint")?;
    let text = std::str::from_utf8(ar.get_u8("config")?)
        .map_err(|_| PipelineError::Corrupt("config block is not UTF-8".into()))?;
    let stored = Config::parse(text)?;
    if stored.fingerprint() != stored_fp {
        return Err(PipelineError::Corrupt("stored config does not match its fingerprint".into()));
    }
    if cfg.fingerprint() != stored_fp {
        return Err(PipelineError::Fingerprint {
            expected: cfg.fingerprint(),
            found: stored_fp,
        });
    }
    let mut t = Trainer::new(cfg.clone())?;
    let [env_steps, phase_steps, updates, episode, layout_epoch, need_reset, relayout, finetune, task] =
        exact::<9>(ar.get_u64("counters")?, "counters")?;
    t.counters = Counters {
        env_steps,
        phase_steps,
        updates,
        episode,
        layout_epoch,
    };
    t.need_reset = need_reset != 0;
    t.relayout = relayout != 0;
    t.phase = if finetune != 0 { Phase::Finetune } else { Phase::Explore };
    t.task = *curio_drivesim::Task::ALL
        .get(task as usize)
        .ok_or_else(|| PipelineError::Corrupt("task index out of range".into()))?;
    t.act_rng = get_rng(ar, "rng.act")?;
    t.train_rng = get_rng(ar, "rng.train")?;

    get_params(ar, "wm", &mut t.wm.params_mut())?;
    get_adam(ar, "wm", &mut t.wm_opt)?;
    let Ensemble { members, opts, .. } = &mut t.ensemble;
    for (k, (m, opt)) in members.iter_mut().zip(opts.iter_mut()).enumerate() {
        get_params(ar, &format!("ensemble.{k}"), &mut m.params_mut())?;
        get_adam(ar, &format!("ensemble.{k}"), opt)?;
    }
    let ActorCritic {
        actor,
        critic,
        actor_opt,
        critic_opt,
        ..
    } = &mut t.ac;
    get_params(ar, "actor", &mut actor.params_mut())?;
    get_adam(ar, "actor", actor_opt)?;
    get_params(ar, "critic", &mut critic.params_mut())?;
    get_adam(ar, "critic", critic_opt)?;

    t.latent = LatentState {
        h: ar.get_f64("latent.h")?.1,
        z: ar.get_f64("latent.z")?.1,
        z_mean: ar.get_f64("latent.z_mean")?.1,
        z_std: ar.get_f64("latent.z_std")?.1,
    };
    let m = &t.wm.cfg;
    if t.latent.h.len() != m.deter || t.latent.z.len() != m.stoch {
        return Err(PipelineError::Corrupt("latent state has the wrong width".into()));
    }
    t.prev_action = f64s::<2>(ar, "latent.prev_action")?;

    let [x, y, heading, speed, prev_steer] = f64s::<5>(ar, "env.state")?;
    let [env_t, wrong_way, stall, done] = exact::<4>(ar.get_u64("env.counters")?, "env.counters")?;
    let frames = ar.get_u8("env.frames")?;
    if frames.len() != STACK * CELLS {
        return Err(PipelineError::Corrupt("env frames have the wrong size".into()));
    }
    // the current layout belongs to the stored run, even if `cfg` changes the schedule
    let layout = TrackLayout::randomize(
        stored.train.layout,
        layout_seed(stored.train.seed, t.phase, layout_epoch),
    );
    let snap = EnvSnapshot {
        layout,
        state: VehicleState::new(x, y, heading, speed),
        history: EventHistory {
            wrong_way_steps: wrong_way as usize,
            stall_steps: stall as usize,
        },
        t: env_t as usize,
        frames: frames.chunks(CELLS).map(Arc::from).collect(),
        prev_steer,
        done: done != 0,
    };
    t.env = DriveEnv::restore(snap, cfg.env_config());

    let sums = ar.get_f64("interval.sums")?.1;
    let [n_updates, n_steps] = exact::<2>(ar.get_u64("interval.counts")?, "interval.counts")?;
    if sums.len() != 12 {
        return Err(PipelineError::Corrupt("interval sums have the wrong length".into()));
    }
    t.interval = IntervalStats {
        update_sums: sums[..10].try_into().expect("10 values"),
        updates: n_updates,
        r_int_sum: sums[10],
        r_ext_sum: sums[11],
        steps: n_steps,
    };
    t.buffer = get_buffer(ar, cfg.train.capacity)?;
    Ok(t)
}

pub fn save_checkpoint(trainer: &Trainer, path: &Path) -> Result<()> {
    let bytes = to_archive(trainer).to_bytes();
    // write-then-rename so an interrupted save never leaves a torn file
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes).map_err(|e| PipelineError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| PipelineError::io(path, e))
}

/// Loads a checkpoint, using the configuration stored inside it.
pub fn load_checkpoint(path: &Path) -> Result<Trainer> {
    let ar = read_archive(path)?;
    let text = std::str::from_utf8(ar.get_u8("config")?)
        .map_err(|_| PipelineError::Corrupt("config block is not UTF-8".into()))?;
    let cfg = Config::parse(text)?;
    from_archive(&ar, &cfg)
}

/// Loads a checkpoint under an explicit configuration, which must agree on architecture.
pub fn load_checkpoint_with(path: &Path, cfg: &Config) -> Result<Trainer> {
    from_archive(&read_archive(path)?, cfg)
}

fn read_archive(path: &Path) -> Result<Archive> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
    Archive::from_bytes(&bytes)
}

/// The parameter blocks only, e.g. to assert that a phase left them unchanged.
pub fn parameter_blocks(trainer: &Trainer) -> Vec<Block> {
    to_archive(trainer)
        .blocks
        .into_iter()
        .filter(|b| b.name.contains(".param.") || b.name.contains(".adam."))
        .collect()
}
