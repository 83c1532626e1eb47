//! The Hunter gridworld: a pixel-rendered arena of walls, cows, and zombies.
//!
//! Episodes reward catching cows (+1), shooting zombies (+1), clearing the
//! arena (+5), and punish being caught by a zombie (-1). Observations are
//! RGB images composed from fixed per-kind sprites, one sprite per grid
//! cell, which is what makes the unsupervised object discovery in
//! [`crate::uod`] exact.

pub mod config;
pub mod hunter;
pub mod sprites;

pub use config::EnvConfig;
pub use hunter::{Action, HunterEnv, Step};

/// What occupies a grid cell.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Kind {
    Floor,
    Wall,
    Hunter,
    Cow,
    Zombie,
}
