//! Environment configuration and the compact task naming scheme.

use alloc::string::String;

use crate::error::{Error, Result};

/// Layout and episode parameters for [`super::HunterEnv`].
///
/// The observation is always 64x64 pixels, so `grid_cells * cell_pixels`
/// must equal 64. The outermost ring of cells is wall, leaving
/// `(grid_cells - 2)^2` interior cells for the hunter and the monsters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvConfig {
    pub grid_cells: usize,
    pub cell_pixels: usize,
    pub n_zombies: usize,
    pub n_cows: usize,
    /// When set, each episode swaps the zombie and cow counts with
    /// probability one half.
    pub mirrored: bool,
    pub max_steps: usize,
}

impl EnvConfig {
    /// The standard 8x8-cell arena with the default step limit.
    pub fn hunter(n_zombies: usize, n_cows: usize, mirrored: bool) -> Self {
        EnvConfig {
            grid_cells: 8,
            cell_pixels: 8,
            n_zombies,
            n_cows,
            mirrored,
            max_steps: 200,
        }
    }

    /// Parses a task id such as `Z4C4` or `Z1C0m` (trailing `m` marks the
    /// mirrored variant).
    pub fn from_id(id: &str) -> Result<Self> {
        let bad = || Error::config(alloc::format!("unrecognized task id {id:?}"));
        let rest = id.strip_prefix('Z').ok_or_else(bad)?;
        let c_at = rest.find('C').ok_or_else(bad)?;
        let (z_str, after) = rest.split_at(c_at);
        let rest = &after[1..];
        let (c_str, mirrored) = match rest.strip_suffix('m') {
            Some(head) => (head, true),
            None => (rest, false),
        };
        let n_zombies: usize = z_str.parse().map_err(|_| bad())?;
        let n_cows: usize = c_str.parse().map_err(|_| bad())?;
        let cfg = EnvConfig::hunter(n_zombies, n_cows, mirrored);
        cfg.validate()?;
        Ok(cfg)
    }

    /// The canonical id for this configuration.
    pub fn id(&self) -> String {
        let m = if self.mirrored { "m" } else { "" };
        alloc::format!("Z{}C{}{}", self.n_zombies, self.n_cows, m)
    }

    pub fn observation_side(&self) -> usize {
        self.grid_cells * self.cell_pixels
    }

    /// Cells not taken up by the border wall.
    pub fn interior_cells(&self) -> usize {
        (self.grid_cells - 2) * (self.grid_cells - 2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_cells < 3 {
            return Err(Error::config("grid must be at least 3x3 to have an interior"));
        }
        if self.grid_cells * self.cell_pixels != 64 {
            return Err(Error::config(alloc::format!(
                "observation must be 64 pixels on a side, got {} cells x {} pixels",
                self.grid_cells,
                self.cell_pixels
            )));
        }
        // The largest entity count is drawn when mirrored swaps the counts,
        // but swapping preserves the sum, so one check covers both.
        if self.n_zombies + self.n_cows + 1 > self.interior_cells() {
            return Err(Error::config(alloc::format!(
                "{} zombies + {} cows + the hunter exceed {} interior cells",
                self.n_zombies,
                self.n_cows,
                self.interior_cells()
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be positive"));
        }
        Ok(())
    }
}
