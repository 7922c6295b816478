use curio_drivesim::layout::VEHICLE_HALF_WIDTH;
use curio_drivesim::{LayoutId, TrackLayout};

/// Brute-force point-to-polyline distance, independent of `TrackLayout::project`.
fn polyline_distance(pts: &[[f64; 2]], x: f64, y: f64) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let [ax, ay] = pts[i];
            let [bx, by] = pts[(i + 1) % n];
            let (dx, dy) = (bx - ax, by - ay);
            let t = (((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)).clamp(0.0, 1.0);
            (ax + t * dx - x).hypot(ay + t * dy - y)
        })
        .fold(f64::INFINITY, f64::min)
}

fn check(layout: &TrackLayout) {
    let pts = &layout.centerline;
    let n = pts.len();
    for i in 0..n {
        let [x0, y0] = pts[i];
        let [x1, y1] = pts[(i + 1) % n];
        let d = (x1 - x0).hypot(y1 - y0);
        assert!((1.0..=5.0).contains(&d), "spacing {d} at {i}");
    }
    assert!(layout.lane_width > 2.0 * VEHICLE_HALF_WIDTH);
    let half = layout.lane_width / 2.0 + layout.margin;
    for o in &layout.obstacles {
        assert!(polyline_distance(pts, o.x, o.y) <= half, "obstacle off the drivable area");
    }
    assert_eq!(layout.spawns.len(), 4);
    for s in &layout.spawns {
        let d = polyline_distance(pts, s.x, s.y);
        assert!(d < 1e-9, "spawn off centerline by {d}");
        assert!(layout.obstacles.iter().all(|o| (o.x - s.x).hypot(o.y - s.y) > 10.0));
    }
}

#[test]
fn generated_layouts_hold_invariants_for_1000_seeds() {
    for seed in 0..1000u64 {
        for id in [LayoutId::A, LayoutId::B] {
            let l = TrackLayout::randomize(id, seed);
            assert_eq!(l.id, id);
            check(&l);
        }
    }
}

#[test]
fn families_differ_in_geometry_and_density() {
    let mut count = [0usize; 2];
    for seed in 0..200u64 {
        let a = TrackLayout::randomize(LayoutId::A, seed);
        let b = TrackLayout::randomize(LayoutId::B, seed);
        assert_ne!(a.centerline, b.centerline);
        count[0] += a.obstacles.len();
        count[1] += b.obstacles.len();
    }
    assert!(count[1] > count[0]);
}

#[test]
fn text_format_round_trips_generated_layouts() {
    for seed in [0u64, 17, 999] {
        let l = TrackLayout::randomize(LayoutId::B, seed);
        let back = TrackLayout::parse(&l.to_text(), LayoutId::B).unwrap();
        assert_eq!(back.centerline.len(), l.centerline.len());
        assert_eq!(back.obstacles.len(), l.obstacles.len());
        check(&back);
    }
}
