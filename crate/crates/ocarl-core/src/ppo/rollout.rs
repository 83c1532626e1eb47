//! Experience collection over a lockstep environment pool.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::Agent;
use crate::env::{Action, EnvConfig, HunterEnv};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One recorded step of one environment.
#[derive(Clone, Debug)]
pub struct Transition {
    /// CHW byte frame the policy acted on.
    pub frame: Vec<u8>,
    /// Extended category per cell, as observed (after confusion masking).
    pub cats: Option<Vec<usize>>,
    pub action: usize,
    /// Log-probability of `action` under the acting policy.
    pub log_prob: f64,
    /// Critic value of `frame` under the acting policy.
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

/// One collect's worth of experience, kept separated per environment so
/// advantage estimation can respect stream order.
pub struct CollectBuffer {
    pub streams: Vec<Vec<Transition>>,
    /// Critic value of each environment's observation after its last
    /// recorded step, used to bootstrap the advantage recursion.
    pub bootstraps: Vec<f64>,
}

impl CollectBuffer {
    pub fn len(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of recorded rewards, for quick progress monitoring.
    pub fn total_reward(&self) -> f64 {
        self.streams.iter().flatten().map(|t| t.reward).sum()
    }

    /// Completed-episode returns contained in this collect.
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut returns = Vec::new();
        for stream in &self.streams {
            let mut acc = 0.0;
            for t in stream {
                acc += t.reward;
                if t.done {
                    returns.push(acc);
                    acc = 0.0;
                }
            }
        }
        returns
    }
}

/// Samples an index from a probability vector by inverse transform.
pub fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// A pool of environments stepped in lockstep, plus the action stream.
pub struct Collector {
    envs: Vec<HunterEnv>,
    rng: ChaCha8Rng,
}

impl Collector {
    /// Builds `pool` environments with per-member seeds derived from `seed`.
    pub fn new(cfg: &EnvConfig, pool: usize, seed: u64) -> Result<Self> {
        if pool == 0 {
            return Err(Error::argument("pool must hold at least one environment"));
        }
        let mut envs = Vec::with_capacity(pool);
        for i in 0..pool {
            let member_seed = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            envs.push(HunterEnv::new(cfg.clone(), member_seed)?);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Ok(Collector { envs, rng })
    }

    pub fn pool(&self) -> usize {
        self.envs.len()
    }

    /// Runs every environment for `steps_per_env` steps, recording the
    /// transitions and finishing with a bootstrap value per environment.
    /// Episodes that end mid-collect reset in place.
    pub fn collect<T: Scalar>(
        &mut self,
        agent: &mut Agent<T>,
        steps_per_env: usize,
    ) -> Result<CollectBuffer> {
        if steps_per_env == 0 {
            return Err(Error::argument("collect needs at least one step per environment"));
        }
        let pool = self.envs.len();
        let mut streams: Vec<Vec<Transition>> = (0..pool)
            .map(|_| Vec::with_capacity(steps_per_env))
            .collect();
        for _ in 0..steps_per_env {
            let frames: Vec<Vec<u8>> = self.envs.iter().map(HunterEnv::render_bytes).collect();
            let refs: Vec<&[u8]> = frames.iter().map(Vec::as_slice).collect();
            let evals = agent.evaluate_frames(&refs)?;
            for (e, eval) in evals.into_iter().enumerate() {
                let action = sample_action(&eval.probs, &mut self.rng);
                let step = self.envs[e].step(Action::from_index(action)?)?;
                streams[e].push(Transition {
                    frame: frames[e].clone(),
                    cats: eval.cats,
                    action,
                    log_prob: eval.probs[action].max(f64::MIN_POSITIVE).ln(),
                    value: eval.value,
                    reward: step.reward,
                    done: step.done,
                });
                if step.done {
                    self.envs[e].reset();
                }
            }
        }
        let frames: Vec<Vec<u8>> = self.envs.iter().map(HunterEnv::render_bytes).collect();
        let refs: Vec<&[u8]> = frames.iter().map(Vec::as_slice).collect();
        let bootstraps = agent.evaluate_frames(&refs)?.into_iter().map(|e| e.value).collect();
        Ok(CollectBuffer { streams, bootstraps })
    }
}
