use crate::error::{AgentError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AgentConfig {
    pub horizon: usize,
    /// λ of the λ-returns.
    pub lambda: f64,
    pub entropy_weight: f64,
    pub gamma: f64,
    /// Magnitude of the steering penalty.
    pub steer_penalty: f64,
    /// Steering magnitude above which the penalty applies (strictly).
    pub steer_threshold: f64,
    /// Weight of the extrinsic term when mixing rewards.
    pub alpha: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: usize,
    /// Global gradient-norm clip per update (0 disables).
    pub grad_clip: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            horizon: 15,
            lambda: 0.95,
            entropy_weight: 3e-4,
            gamma: 0.99,
            steer_penalty: 0.5,
            steer_threshold: 0.8,
            alpha: 0.0,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            hidden: 128,
            grad_clip: 100.0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(AgentError::Config(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        unit("alpha", self.alpha)?;
        if !(self.steer_threshold > 0.0 && self.steer_threshold < 1.0) {
            return Err(AgentError::Config(format!(
                "steer_threshold = {} outside (0, 1)",
                self.steer_threshold
            )));
        }
        if self.horizon == 0 {
            return Err(AgentError::Horizon);
        }
        if self.hidden == 0 || !(self.steer_penalty >= 0.0) || !(self.entropy_weight >= 0.0) {
            return Err(AgentError::Config("hidden, steer_penalty and entropy_weight must be non-negative".into()));
        }
        Ok(())
    }
}
