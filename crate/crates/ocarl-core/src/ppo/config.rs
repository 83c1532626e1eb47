//! Training hyperparameters.

use crate::error::{Error, Result};

/// Everything the trainer needs to know, with the defaults the experiments
/// run at.
#[derive(Clone, Debug)]
pub struct PpoConfig {
    /// Reward discount.
    pub gamma: f64,
    /// Advantage-estimation decay.
    pub gae_lambda: f64,
    /// Surrogate clipping radius.
    pub clip: f64,
    /// Weight of the squared value error.
    pub value_coef: f64,
    /// Weight of the entropy bonus.
    pub entropy_coef: f64,
    /// Adam step size.
    pub learning_rate: f64,
    /// Global gradient-norm ceiling applied before each step.
    pub max_grad_norm: f64,
    /// Environments stepped in lockstep.
    pub envs: usize,
    /// Transitions gathered per collect, across the whole pool.
    pub steps_per_collect: usize,
    /// Optimization epochs over each collect.
    pub repeat_per_collect: usize,
    /// Samples per optimizer step.
    pub minibatch: usize,
    /// Environment steps to train for in total.
    pub total_steps: usize,
    /// Collects between evaluation passes.
    pub eval_every: usize,
    /// Episodes per evaluation pass.
    pub eval_episodes: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 5e-4,
            max_grad_norm: 0.5,
            envs: 8,
            steps_per_collect: 1024,
            repeat_per_collect: 3,
            minibatch: 256,
            total_steps: 300_000,
            eval_every: 10,
            eval_episodes: 30,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("gae_lambda must lie in [0, 1]"));
        }
        if !(self.clip > 0.0) {
            return Err(Error::config("clip radius must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !(self.max_grad_norm > 0.0) {
            return Err(Error::config("max_grad_norm must be positive"));
        }
        if self.envs == 0 || self.steps_per_collect == 0 || self.minibatch == 0 {
            return Err(Error::config("pool, collect, and minibatch sizes must be positive"));
        }
        if self.steps_per_collect % self.envs != 0 {
            return Err(Error::config("steps_per_collect must divide evenly across the pool"));
        }
        if self.repeat_per_collect == 0 {
            return Err(Error::config("repeat_per_collect must be positive"));
        }
        Ok(())
    }

    /// Steps each pool member contributes to one collect.
    pub fn steps_per_env(&self) -> usize {
        self.steps_per_collect / self.envs
    }
}
