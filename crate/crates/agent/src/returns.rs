use curio_diffcore::{Tape, Var};

use crate::error::{AgentError, Result};

/// λ-return targets for `H` imagined transitions.
///
/// `rewards[i]`, `cont[i]` belong to the arrival at state `i + 1`; `values`
/// has `H + 1` entries for states `0..=H` (entry 0 is unused). Output `i` is
/// `r + γ·c·((1 − λ)·V(s_{i+1}) + λ·R_{i+2})`, with `R_{H+1} = V(s_H)`.
pub fn lambda_returns(rewards: &[f64], values: &[f64], cont: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    let h = rewards.len();
    if h == 0 || cont.len() != h || values.len() != h + 1 {
        return Err(AgentError::Misaligned(format!(
            "{h} rewards, {} continuations, {} values",
            cont.len(),
            values.len()
        )));
    }
    let mut out = vec![0.0; h];
    let mut next = values[h];
    for i in (0..h).rev() {
        // same association as the tape version, so both agree bitwise
        let mix = values[i + 1] * (1.0 - lambda) + next * lambda;
        next = rewards[i] + cont[i] * mix * gamma;
        out[i] = next;
    }
    Ok(out)
}

/// [`lambda_returns`] over `rows × 1` tape variables.
pub fn lambda_returns_tape(
    tape: &mut Tape,
    rewards: &[Var],
    values: &[Var],
    cont: &[Var],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<Var>> {
    let h = rewards.len();
    if h == 0 || cont.len() != h || values.len() != h + 1 {
        return Err(AgentError::Misaligned(format!(
            "{h} rewards, {} continuations, {} values",
            cont.len(),
            values.len()
        )));
    }
    let mut out = vec![values[h]; h];
    let mut next = values[h];
    for i in (0..h).rev() {
        let boot = tape.scale(values[i + 1], 1.0 - lambda);
        let carry = tape.scale(next, lambda);
        let mix = tape.add(boot, carry)?;
        let disc = tape.mul(cont[i], mix)?;
        let disc = tape.scale(disc, gamma);
        next = tape.add(rewards[i], disc)?;
        out[i] = next;
    }
    Ok(out)
}
