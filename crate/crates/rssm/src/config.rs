use crate::error::{ModelError, Result};

/// Sizes and loss weights of the world model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Deterministic state width `D_h`.
    pub deter: usize,
    /// Stochastic latent width `D_z`.
    pub stoch: usize,
    pub embed: usize,
    pub hidden: usize,
    pub frames: usize,
    pub classes: usize,
    /// Cells per frame (`H·W`).
    pub cells: usize,
    /// Scalar observation channels appended to the embedding.
    pub scalars: usize,
    pub action_dim: usize,
    /// KL scale β.
    pub beta: f64,
    /// Lower clamp on the batch-mean KL, in nats.
    pub free_bits: f64,
    /// Continuation loss weight λ_γ.
    pub cont_weight: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            deter: 128,
            stoch: 32,
            embed: 64,
            hidden: 128,
            frames: 4,
            classes: 6,
            cells: 1024,
            scalars: 2,
            action_dim: 2,
            beta: 1.0,
            free_bits: 1.0,
            cont_weight: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn obs_dim(&self) -> usize {
        self.frames * self.cells * self.classes
    }

    /// Active one-hot entries per observation.
    pub fn active_per_obs(&self) -> usize {
        self.frames * self.cells
    }

    /// Width of `concat(h, z)`.
    pub fn feature_dim(&self) -> usize {
        self.deter + self.stoch
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("deter", self.deter),
            ("stoch", self.stoch),
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("frames", self.frames),
            ("classes", self.classes),
            ("cells", self.cells),
            ("scalars", self.scalars),
            ("action_dim", self.action_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        if self.classes > u8::MAX as usize + 1 {
            return Err(ModelError::Config("too many classes for u8 targets".into()));
        }
        if !(self.beta > 0.0 && self.cont_weight > 0.0) {
            return Err(ModelError::Config("beta and cont_weight must be positive".into()));
        }
        if !(self.free_bits >= 0.0) {
            return Err(ModelError::Config("free_bits must be non-negative".into()));
        }
        Ok(())
    }
}
