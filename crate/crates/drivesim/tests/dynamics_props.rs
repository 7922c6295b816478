use curio_drivesim::{
    detect_events, render_semantic, step_dynamics, DriveEnv, EnvConfig, Event, EventHistory, LayoutId, TrackLayout,
    VehicleState, NUM_CLASSES,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn speed_stays_in_range_and_heading_wrapped(
        v in 0.0f64..15.0,
        h in -std::f64::consts::PI..std::f64::consts::PI,
        actions in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..60),
    ) {
        let cfg = EnvConfig::default();
        let mut s = VehicleState::new(0.0, 0.0, h, v);
        for (steer, acc) in actions {
            let next = step_dynamics(&s, [steer, acc], &cfg);
            prop_assert_eq!(next, step_dynamics(&s, [steer, acc], &cfg));
            prop_assert!(next.speed >= 0.0 && next.speed <= cfg.v_max);
            prop_assert!(next.heading > -std::f64::consts::PI && next.heading <= std::f64::consts::PI);
            s = next;
        }
    }

    #[test]
    fn inside_the_lane_is_never_off_road(seed in 0u64..50, s in 0.0f64..1.0, frac in -1.0f64..1.0) {
        let layout = TrackLayout::randomize(LayoutId::A, seed);
        let cfg = EnvConfig::default();
        let ([x, y], dir) = layout.point_at(s * layout.length());
        let d = frac * layout.lane_width / 2.0;
        let state = VehicleState::new(x - d * dir.sin(), y + d * dir.cos(), dir, 5.0);
        let ev = detect_events(&state, &mut EventHistory::default(), &layout, &cfg, 1);
        prop_assert!(!ev.contains(Event::OffRoad));
        let grid = render_semantic(&state, &layout);
        prop_assert!(grid.iter().all(|&c| (c as usize) < NUM_CLASSES));
        prop_assert_eq!(grid, render_semantic(&state, &layout));
    }
}

#[test]
fn distinct_seeds_give_distinct_spawns() {
    let layout = TrackLayout::randomize(LayoutId::A, 4);
    let cfg = EnvConfig::default();
    let spawns: Vec<_> = (0..4).map(|k| curio_drivesim::reset(&layout, k, &cfg).0).collect();
    for i in 0..4 {
        for j in i + 1..4 {
            assert_ne!(spawns[i], spawns[j]);
        }
    }
}

#[test]
fn terminated_iff_events_and_rollouts_repeat() {
    let layout = TrackLayout::randomize(LayoutId::B, 11);
    let run = || {
        let mut env = DriveEnv::new(layout.clone(), EnvConfig::default());
        env.reset(2);
        let mut trace = Vec::new();
        for k in 0..400 {
            let out = env.step([((k as f64) * 0.05).sin() * 0.6, 0.7]);
            assert_eq!(out.terminated, !out.events.is_empty());
            assert_eq!(out.reason.is_some(), out.terminated);
            let done = out.terminated;
            trace.push(out);
            if done {
                break;
            }
        }
        trace
    };
    assert_eq!(run(), run());
}
