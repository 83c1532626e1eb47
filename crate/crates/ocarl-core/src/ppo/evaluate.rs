//! Policy evaluation over fresh episodes.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::Agent;
use crate::env::{Action, EnvConfig, HunterEnv};
use crate::error::{Error, Result};
use crate::ppo::rollout::sample_action;
use crate::scalar::Scalar;

/// Returns of an evaluation pass.
#[derive(Clone, Debug)]
pub struct EvalStats {
    pub mean_return: f64,
    pub mean_length: f64,
    pub returns: Vec<f64>,
}

/// Plays `episodes` fresh episodes and reports their returns.
///
/// Actions are sampled from the policy unless `greedy`, which takes the
/// argmax (first index on ties). Episode e runs on an environment seeded
/// `seed + e`, so a pass is reproducible and comparable across policies.
pub fn evaluate<T: Scalar>(
    agent: &mut Agent<T>,
    cfg: &EnvConfig,
    episodes: usize,
    seed: u64,
    greedy: bool,
) -> Result<EvalStats> {
    if episodes == 0 {
        return Err(Error::argument("evaluation needs at least one episode"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut returns = Vec::with_capacity(episodes);
    let mut lengths = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut env = HunterEnv::new(cfg.clone(), seed.wrapping_add(e as u64))?;
        let mut acc = 0.0;
        let mut len = 0usize;
        while !env.is_done() {
            let frame = env.render_bytes();
            let eval = agent.evaluate_frames(&[&frame])?.pop().expect("one frame in, one out");
            let action = if greedy {
                let mut best = 0;
                for (i, &p) in eval.probs.iter().enumerate() {
                    if p > eval.probs[best] {
                        best = i;
                    }
                }
                best
            } else {
                sample_action(&eval.probs, &mut rng)
            };
            let step = env.step(Action::from_index(action)?)?;
            acc += step.reward;
            len += 1;
        }
        returns.push(acc);
        lengths.push(len as f64);
    }
    let mean_return = returns.iter().sum::<f64>() / episodes as f64;
    let mean_length = lengths.iter().sum::<f64>() / episodes as f64;
    Ok(EvalStats { mean_return, mean_length, returns })
}
