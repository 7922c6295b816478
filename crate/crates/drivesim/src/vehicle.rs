use std::f64::consts::PI;

use crate::config::EnvConfig;

/// Ego pose and speed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Radians, wrapped to `(-π, π]`.
    pub heading: f64,
    /// m/s, in `[0, v_max]`.
    pub speed: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
            speed,
        }
    }
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// One kinematic bicycle step for `action = [steer, accel]`, each clamped to `[-1, 1]`.
///
/// Position integrates the speed from before this step's acceleration.
pub fn step_dynamics(s: &VehicleState, action: [f64; 2], cfg: &EnvConfig) -> VehicleState {
    let steer = action[0].clamp(-1.0, 1.0) * cfg.max_steer;
    let accel = action[1].clamp(-1.0, 1.0);
    let x = s.x + s.speed * s.heading.cos() * cfg.dt;
    let y = s.y + s.speed * s.heading.sin() * cfg.dt;
    let heading = wrap_angle(s.heading + s.speed / cfg.wheelbase * steer.tan() * cfg.dt);
    let speed = (s.speed + accel * cfg.a_max * cfg.dt).clamp(0.0, cfg.v_max);
    VehicleState { x, y, heading, speed }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn at_rest_with_no_input_nothing_moves() {
        let cfg = EnvConfig::default();
        let s = VehicleState::new(1.0, -2.0, 0.3, 0.0);
        assert_eq!(step_dynamics(&s, [0.0, 0.0], &cfg), s);
    }

    #[test]
    fn from_rest_full_throttle() {
        let cfg = EnvConfig::default();
        let s = VehicleState::new(0.0, 0.0, 0.0, 0.0);
        let n = step_dynamics(&s, [0.0, 1.0], &cfg);
        assert!((n.speed - 0.3).abs() < 1e-12);
        assert_eq!((n.x, n.y, n.heading), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mirrored_steering_mirrors_the_path() {
        let cfg = EnvConfig::default();
        let mut l = VehicleState::new(0.0, 0.0, 0.0, 5.0);
        let mut r = l;
        for k in 0..50 {
            let steer = ((k as f64) * 0.37).sin();
            l = step_dynamics(&l, [steer, 0.2], &cfg);
            r = step_dynamics(&r, [-steer, 0.2], &cfg);
            assert!((l.x - r.x).abs() < 1e-12);
            assert!((l.y + r.y).abs() < 1e-12);
            assert!((l.heading + r.heading).abs() < 1e-12);
        }
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }
}
