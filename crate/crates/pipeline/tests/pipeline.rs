use curio_diffcore::SplitRng;
use curio_drivesim::Task;
use curio_pipeline::{
    explore_phase, finetune_phase, load_checkpoint, load_checkpoint_with, metrics_csv, parameter_blocks,
    save_checkpoint, to_archive, Config, FinetuneMode, PipelineError, ReplayBuffer, Trainer, TransitionRecord,
};

fn tiny() -> Config {
    Config::parse(
        "model.deter = 12\nmodel.stoch = 4\nmodel.embed = 8\nmodel.hidden = 16\n\
         train.k = 3\nensemble.hidden = 8\nagent.hidden = 8\nagent.horizon = 4\n\
         train.batch = 3\ntrain.seq_len = 6\ntrain.warmup = 20\ntrain.log_interval = 10\n\
         train.imagine_starts = 6\ntrain.capacity = 400\nenv.t_max = 60\n\
         train.randomization_period = 45\ntrain.seed = 11\ntrain.n_explore = 120\ntrain.n_fine = 40\n",
    )
    .unwrap()
}

fn bytes(t: &Trainer) -> Vec<u8> {
    to_archive(t).to_bytes()
}

#[test]
fn same_seed_and_config_reproduce_metrics_bitwise() {
    let cfg = tiny();
    let mut a = explore_phase(&cfg).unwrap();
    let mut b = explore_phase(&cfg).unwrap();
    let (ra, rb) = (a.drain_metrics(), b.drain_metrics());
    assert_eq!(metrics_csv(&ra), metrics_csv(&rb));
    assert_eq!(bytes(&a), bytes(&b));
    assert!(a.counters.updates > 0);

    let mut other = cfg.clone();
    other.train.seed = 12;
    let mut c = explore_phase(&other).unwrap();
    assert_ne!(metrics_csv(&c.drain_metrics()), metrics_csv(&ra));
}

#[test]
fn metrics_have_one_row_per_interval_with_increasing_steps() {
    let cfg = tiny();
    let mut t = explore_phase(&cfg).unwrap();
    let rows = t.drain_metrics();
    assert_eq!(rows.len(), cfg.train.n_explore / cfg.train.log_interval);
    assert!(rows.windows(2).all(|w| w[0].step < w[1].step));
    assert_eq!(rows.last().unwrap().step, cfg.train.n_explore as u64);
    // updates only start after warm-up
    assert!(rows[0].values[0].is_nan());
    assert!(rows.last().unwrap().values[0].is_finite());
}

#[test]
fn resuming_from_a_checkpoint_matches_the_uninterrupted_run() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.ckpt");

    let mut straight = Trainer::new(cfg.clone()).unwrap();
    straight.run(200, &mut |_| {}).unwrap();
    let straight_rows = straight.drain_metrics();

    let mut first = Trainer::new(cfg.clone()).unwrap();
    first.run(100, &mut |_| {}).unwrap();
    let mut rows = first.drain_metrics();
    save_checkpoint(&first, &path).unwrap();
    drop(first);
    let mut resumed = load_checkpoint(&path).unwrap();
    resumed.run(100, &mut |_| {}).unwrap();
    rows.extend(resumed.drain_metrics());

    assert_eq!(metrics_csv(&rows), metrics_csv(&straight_rows));
    assert_eq!(bytes(&resumed), bytes(&straight));
}

#[test]
fn save_load_save_is_byte_identical() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a.ckpt"), dir.path().join("b.ckpt"));
    let mut t = Trainer::new(cfg).unwrap();
    t.run(73, &mut |_| {}).unwrap();
    save_checkpoint(&t, &p1).unwrap();
    save_checkpoint(&load_checkpoint(&p1).unwrap(), &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}

#[test]
fn damaged_checkpoints_are_rejected_with_specific_errors() {
    let cfg = tiny();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    let mut t = Trainer::new(cfg.clone()).unwrap();
    t.run(30, &mut |_| {}).unwrap();
    save_checkpoint(&t, &path).unwrap();
    let good = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.ckpt");
    std::fs::write(&cut, &good[..good.len() / 2]).unwrap();
    assert!(matches!(load_checkpoint(&cut), Err(PipelineError::Corrupt(_))));

    let flipped = dir.path().join("flip.ckpt");
    let mut bad = good.clone();
    let mid = bad.len() / 2;
    bad[mid] ^= 1;
    std::fs::write(&flipped, &bad).unwrap();
    assert!(matches!(load_checkpoint(&flipped), Err(PipelineError::Corrupt(_))));

    // a well-formed file from a future format version
    let mut ar = curio_pipeline::Archive::from_bytes(&good).unwrap().to_bytes();
    ar[8..12].copy_from_slice(&2u32.to_le_bytes());
    let n = ar.len() - 8;
    let sum = fnv(&ar[..n]);
    ar[n..].copy_from_slice(&sum.to_le_bytes());
    let future = dir.path().join("v2.ckpt");
    std::fs::write(&future, &ar).unwrap();
    assert!(matches!(
        load_checkpoint(&future),
        Err(PipelineError::Version { found: 2, expected: 1 })
    ));

    let mut wider = cfg;
    wider.model.deter += 4;
    assert!(matches!(
        load_checkpoint_with(&path, &wider),
        Err(PipelineError::Fingerprint { .. })
    ));
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h = (h ^ b as u64).wrapping_mul(0x100000001b3);
    }
    h
}

#[test]
fn sampled_offsets_are_uniform_within_three_sigma() {
    let mut buf = ReplayBuffer::new(1000);
    for (e, len) in [12usize, 7, 20, 5].into_iter().enumerate() {
        for s in 0..len {
            buf.push(TransitionRecord {
                frame: vec![0u8; 1].into(),
                speed_norm: 0.0,
                prev_steer: 0.0,
                action: [0.0; 2],
                r_ext: [0.0; 3],
                r_int: 0.0,
                cont: true,
                episode: e as u64,
                step: s as u32,
            })
            .unwrap();
        }
    }
    let seq = 5;
    // starts per episode: 8, 3, 16, 1
    let valid = buf.valid_starts(seq);
    assert_eq!(valid, 28);
    let draws = 10_000;
    let mut rng = SplitRng::seed_from(2024);
    let mut counts = std::collections::HashMap::new();
    for r in buf.sample(draws, seq, &mut rng).unwrap() {
        *counts.entry(r).or_insert(0usize) += 1;
    }
    assert_eq!(counts.len(), valid);
    let p = 1.0 / valid as f64;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (r, &c) in &counts {
        assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{r:?}: {c} vs {mean} ± {sigma}");
    }
}

#[test]
fn zero_exploration_budget_returns_the_initial_state() {
    let mut cfg = tiny();
    cfg.train.n_explore = 0;
    let t = explore_phase(&cfg).unwrap();
    assert!(t.buffer.is_empty());
    assert_eq!(t.optimizer_steps(), 0);
    assert_eq!(bytes(&t), bytes(&Trainer::new(cfg).unwrap()));
}

#[test]
fn buffer_stays_within_capacity_and_evicts_whole_episodes() {
    let mut cfg = tiny();
    cfg.train.capacity = 70;
    let mut t = Trainer::new(cfg).unwrap();
    let mut max_len = 0;
    t.run(300, &mut |_| {}).unwrap();
    for _ in 0..50 {
        t.step().unwrap();
        max_len = max_len.max(t.buffer.len());
        for e in t.buffer.episodes() {
            assert_eq!(e.records[0].step, 0, "episode {} lost its head", e.id);
        }
    }
    assert!(max_len <= 70);
}

#[test]
fn zero_shot_changes_no_parameter_and_takes_no_optimizer_step() {
    let cfg = tiny();
    let explored = explore_phase(&cfg).unwrap();
    let before = parameter_blocks(&explored);
    let steps = explored.optimizer_steps();
    assert!(steps > 0);
    let zero = finetune_phase(explored.clone(), &cfg, Task::LaneFollow, FinetuneMode::ZeroShot).unwrap();
    assert_eq!(zero.optimizer_steps(), steps);
    assert_eq!(parameter_blocks(&zero), before);

    let mut none = cfg.clone();
    none.train.n_fine = 0;
    let few0 = finetune_phase(explored.clone(), &none, Task::LaneFollow, FinetuneMode::FewShot).unwrap();
    assert_eq!(parameter_blocks(&few0), before);
}

#[test]
fn few_shot_updates_the_agent_but_not_the_ensemble() {
    let cfg = tiny();
    let explored = explore_phase(&cfg).unwrap();
    let ens_steps: Vec<u64> = explored.ensemble.opts.iter().map(|o| o.t).collect();
    let few = finetune_phase(explored.clone(), &cfg, Task::LaneFollow, FinetuneMode::FewShot).unwrap();
    assert_eq!(few.ensemble.members, explored.ensemble.members);
    assert_eq!(few.ensemble.opts.iter().map(|o| o.t).collect::<Vec<_>>(), ens_steps);
    assert!(few.wm_opt.t > explored.wm_opt.t);
    assert!(few.ac.actor_opt.t > explored.ac.actor_opt.t);
    assert_eq!(few.counters.env_steps, (cfg.train.n_explore + cfg.train.n_fine) as u64);
}

#[test]
fn finetune_rejects_a_config_with_another_architecture() {
    let cfg = tiny();
    let explored = Trainer::new(cfg.clone()).unwrap();
    let mut other = cfg;
    other.train.k = 4;
    assert!(matches!(
        finetune_phase(explored, &other, Task::LaneFollow, FinetuneMode::ZeroShot),
        Err(PipelineError::Fingerprint { .. })
    ));
}
