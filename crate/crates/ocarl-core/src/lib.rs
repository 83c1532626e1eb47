//! Object-category aware reinforcement learning at desk scale.
//!
//! The crate is organized as a vertical stack:
//!
//! - [`autodiff`]: a reverse-mode tape engine with the tensor operations the
//!   networks need, plus finite-difference gradient verification.
//! - [`env`]: the Hunter gridworld with pixel rendering and ground-truth
//!   category annotations.
//! - [`uod`]: unsupervised object discovery — per-cell presence detection,
//!   PCA+KMeans category prediction, extended categories, confusion masking.
//! - [`ocap`] / [`ocmr`]: the perception encoder with its auxiliary category
//!   loss, and the attention + category-routed reasoning module.
//! - [`agent`]: the five agent variants assembled from the pieces above.
//! - [`ppo`]: rollout collection, GAE, and the clipped-surrogate update.
//!
//! The crate is `no_std` + `alloc`; everything that touches the file system,
//! clocks, or threads lives in the companion `ocarl-lab` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod agent;
pub mod autodiff;
pub mod env;
pub mod error;
pub mod nn;
pub mod ocap;
pub mod ocmr;
pub mod ppo;
pub mod scalar;
pub mod uod;

pub use error::{Error, Result};
pub use scalar::Scalar;
