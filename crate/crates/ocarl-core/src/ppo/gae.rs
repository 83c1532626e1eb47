//! Generalized advantage estimation.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Computes advantages and returns for one trajectory segment.
///
/// With `V[T] = bootstrap` (the critic's estimate of the state after the
/// last transition), the temporal-difference residuals are
///
/// `delta[t] = r[t] + gamma * V[t+1] * (1 - done[t]) - V[t]`
///
/// and advantages accumulate backwards,
///
/// `A[t] = delta[t] + gamma * lambda * (1 - done[t]) * A[t+1]`,
///
/// so an episode boundary cuts both the bootstrap and the recursion.
/// Returns are `A[t] + V[t]`. All three inputs must have equal length.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(Error::argument(alloc::format!(
            "segment arrays must agree in length, got {} rewards, {} values, {} dones",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = alloc::vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap;
    for t in (0..n).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * cont - values[t];
        next_adv = delta + gamma * lambda * cont * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}
