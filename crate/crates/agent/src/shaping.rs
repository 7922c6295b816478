use crate::error::{AgentError, Result};

/// `−penalty` when `|steer| > threshold` (strictly), else 0.
pub fn steering_penalty(action: [f64; 2], penalty: f64, threshold: f64) -> f64 {
    if action[0].abs() > threshold {
        -penalty
    } else {
        0.0
    }
}

/// `α·r_ext + (1 − α)·r_int`.
pub fn mix_rewards(r_ext: f64, r_int: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AgentError::Alpha(alpha));
    }
    Ok(alpha * r_ext + (1.0 - alpha) * r_int)
}
