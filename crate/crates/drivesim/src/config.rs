/// Vehicle, episode and observation constants.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Integration step, seconds.
    pub dt: f64,
    pub wheelbase: f64,
    pub v_max: f64,
    pub a_max: f64,
    /// Steering angle at full command, radians.
    pub max_steer: f64,
    /// Steps after which a clean episode counts as completed.
    pub t_max: usize,
    pub stall_speed: f64,
    pub stall_steps: usize,
    /// Heading error (degrees) beyond which the ego counts as driving the wrong way.
    pub wrong_way_angle_deg: f64,
    pub wrong_way_steps: usize,
    /// Env steps between layout re-randomizations during exploration.
    pub randomization_period: usize,
    pub ego_radius: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            wheelbase: 2.5,
            v_max: 15.0,
            a_max: 3.0,
            max_steer: 0.5,
            t_max: 1000,
            stall_speed: 0.3,
            stall_steps: 100,
            wrong_way_angle_deg: 120.0,
            wrong_way_steps: 20,
            randomization_period: 2000,
            ego_radius: 1.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("dt", self.dt),
            ("wheelbase", self.wheelbase),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("max_steer", self.max_steer),
            ("stall_speed", self.stall_speed),
            ("wrong_way_angle_deg", self.wrong_way_angle_deg),
            ("ego_radius", self.ego_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(format!("env.{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("t_max", self.t_max),
            ("stall_steps", self.stall_steps),
            ("wrong_way_steps", self.wrong_way_steps),
            ("randomization_period", self.randomization_period),
        ] {
            if v == 0 {
                return Err(format!("env.{name} must be positive"));
            }
        }
        Ok(())
    }
}
