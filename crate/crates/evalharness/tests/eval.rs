use curio_diffcore::SplitRng;
use curio_drivesim::{EnvConfig, Event, LayoutId, Task};
use curio_evalharness::{finetune_and_eval, run_eval, run_eval_with, transfer_matrix, RandomDriver};
use curio_pipeline::{explore_phase, Config, FinetuneMode, Trainer};

fn tiny() -> Config {
    Config::parse(
        "model.deter = 12\nmodel.stoch = 4\nmodel.embed = 8\nmodel.hidden = 16\n\
         train.k = 3\nensemble.hidden = 8\nagent.hidden = 8\nagent.horizon = 4\n\
         train.batch = 3\ntrain.seq_len = 6\ntrain.warmup = 20\ntrain.log_interval = 10\n\
         train.imagine_starts = 6\ntrain.capacity = 400\nenv.t_max = 60\n\
         train.randomization_period = 45\ntrain.seed = 9\ntrain.n_explore = 80\ntrain.n_fine = 20\n",
    )
    .unwrap()
}

#[test]
fn evaluation_is_deterministic_given_the_seed() {
    let t = explore_phase(&tiny()).unwrap();
    let a = run_eval(&t, Task::LaneFollow, LayoutId::B, 200, 4).unwrap();
    let b = run_eval(&t, Task::LaneFollow, LayoutId::B, 200, 4).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.csv_line(), b.csv_line());
    let c = run_eval(&t, Task::LaneFollow, LayoutId::B, 200, 5).unwrap();
    assert_ne!(a.episodes, c.episodes);
}

#[test]
fn episodes_run_to_completion_past_the_step_budget() {
    let t = Trainer::new(tiny()).unwrap();
    let r = run_eval(&t, Task::CollisionAvoid, LayoutId::A, 100, 1).unwrap();
    assert!(r.total_steps >= 100);
    let last = r.episodes.last().unwrap();
    assert!(r.total_steps - last.steps < 100);
    for e in &r.episodes {
        assert!(e.steps >= 1 && e.steps <= 60);
        assert!(e.events[e.reason as usize] >= 1);
    }
    assert_eq!(r.breakdown.iter().sum::<usize>(), r.episodes.len());
    assert_eq!(r.sr + r.ir, 100.0);
}

#[test]
fn random_driving_rarely_completes() {
    let mut d = RandomDriver {
        rng: SplitRng::seed_from(3),
    };
    let r = run_eval_with(&mut d, &EnvConfig::default(), Task::LaneFollow, LayoutId::A, 5000, 2).unwrap();
    assert!(r.episodes.len() > 5);
    assert!(r.breakdown[Event::Completed as usize] < r.episodes.len());
}

#[test]
fn transfer_matrix_is_task_then_layout_then_seed() {
    let t = Trainer::new(tiny()).unwrap();
    let m = transfer_matrix(&t, &[Task::LaneFollow, Task::CollisionAvoid], &[LayoutId::A, LayoutId::B], 30, &[1, 2])
        .unwrap();
    let keys: Vec<_> = m.iter().map(|r| (r.task, r.layout, r.seed)).collect();
    assert_eq!(keys.len(), 8);
    assert_eq!(keys[0], (Task::LaneFollow, LayoutId::A, 1));
    assert_eq!(keys[3], (Task::LaneFollow, LayoutId::B, 2));
    assert_eq!(keys[7], (Task::CollisionAvoid, LayoutId::B, 2));
}

#[test]
fn zero_shot_eval_matches_plain_eval() {
    let cfg = tiny();
    let t = explore_phase(&cfg).unwrap();
    let direct = run_eval(&t, Task::LaneFollow, LayoutId::A, 120, 8).unwrap();
    let (_, via) = finetune_and_eval(t, &cfg, Task::LaneFollow, FinetuneMode::ZeroShot, LayoutId::A, 120, 8).unwrap();
    assert_eq!(direct, via);
}

#[test]
fn zero_eval_budget_is_rejected() {
    let t = Trainer::new(tiny()).unwrap();
    assert!(run_eval(&t, Task::LaneFollow, LayoutId::A, 0, 0).is_err());
}
