//! Proximal policy optimization: rollout collection over an environment
//! pool, generalized advantage estimation, and the clipped-surrogate update
//! with Adam.

pub mod adam;
pub mod config;
pub mod evaluate;
pub mod gae;
pub mod rollout;
pub mod update;

pub use adam::{clip_grad_norm, Adam, AdamState, GradBuffer};
pub use config::PpoConfig;
pub use evaluate::{evaluate, EvalStats};
pub use gae::compute_gae;
pub use rollout::{sample_action, CollectBuffer, Collector, Transition};
pub use update::{clipped_policy_loss, flatten, ppo_update, Flat, UpdateStats};
