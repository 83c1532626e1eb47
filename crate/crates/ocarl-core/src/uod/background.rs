//! Frame collection and the per-cell background model.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::predictor::PresenceMap;
use crate::env::{Action, EnvConfig, HunterEnv};
use crate::error::{Error, Result};

/// Distinct stream for the random data-collection policy, so that action
/// sampling never perturbs the environment's own stream.
const POLICY_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Runs a uniformly random policy and hands every pre-action observation to
/// `visit`, auto-resetting finished episodes. Fixed seeds reproduce the
/// frame sequence byte for byte.
pub fn stream_dataset(
    cfg: &EnvConfig,
    n_steps: usize,
    seed: u64,
    mut visit: impl FnMut(&[u8]),
) -> Result<()> {
    if n_steps == 0 {
        return Err(Error::argument("dataset collection needs at least one step"));
    }
    let mut env = HunterEnv::new(cfg.clone(), seed)?;
    let mut policy = ChaCha8Rng::seed_from_u64(seed ^ POLICY_SEED_SALT);
    for _ in 0..n_steps {
        visit(&env.render_bytes());
        let action = Action::from_index(policy.gen_range(0..Action::COUNT))?;
        let step = env.step(action)?;
        if step.done {
            env.reset();
        }
    }
    Ok(())
}

/// [`stream_dataset`] collected into memory.
pub fn collect_dataset(cfg: &EnvConfig, n_steps: usize, seed: u64) -> Result<Vec<Vec<u8>>> {
    let mut frames = Vec::with_capacity(n_steps);
    stream_dataset(cfg, n_steps, seed, |frame| frames.push(frame.to_vec()))?;
    Ok(frames)
}

/// Bytes of one grid cell's patch, flattened row-major with interleaved RGB.
pub fn extract_patch(frame: &[u8], grid_cells: usize, cell_pixels: usize, cell: usize) -> Vec<u8> {
    let side = grid_cells * cell_pixels;
    let plane = side * side;
    let (cr, cc) = (cell / grid_cells, cell % grid_cells);
    let mut patch = Vec::with_capacity(3 * cell_pixels * cell_pixels);
    for y in 0..cell_pixels {
        for x in 0..cell_pixels {
            let row = cr * cell_pixels + y;
            let col = cc * cell_pixels + x;
            for ch in 0..3 {
                patch.push(frame[ch * plane + row * side + col]);
            }
        }
    }
    patch
}

/// The fitted background: the modal patch of every grid cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Background {
    grid_cells: usize,
    cell_pixels: usize,
    patches: Vec<Vec<u8>>,
}

/// Streaming accumulator behind [`fit_background`], usable directly when
/// frames should not be held in memory.
pub struct BackgroundAccum {
    grid_cells: usize,
    cell_pixels: usize,
    counts: Vec<BTreeMap<Vec<u8>, u64>>,
    frames_seen: u64,
}

impl BackgroundAccum {
    pub fn new(grid_cells: usize, cell_pixels: usize) -> Self {
        BackgroundAccum {
            grid_cells,
            cell_pixels,
            counts: alloc::vec![BTreeMap::new(); grid_cells * grid_cells],
            frames_seen: 0,
        }
    }

    pub fn add_frame(&mut self, frame: &[u8]) {
        for cell in 0..self.counts.len() {
            let patch = extract_patch(frame, self.grid_cells, self.cell_pixels, cell);
            *self.counts[cell].entry(patch).or_insert(0) += 1;
        }
        self.frames_seen += 1;
    }

    /// Picks each cell's most frequent patch; count ties resolve to the
    /// lexicographically smallest patch.
    pub fn finish(self) -> Result<Background> {
        if self.frames_seen == 0 {
            return Err(Error::argument("background fitting needs a non-empty dataset"));
        }
        let patches = self
            .counts
            .into_iter()
            .map(|counts| {
                let mut best: Option<(Vec<u8>, u64)> = None;
                for (patch, count) in counts {
                    // BTreeMap iterates in ascending key order, so strict
                    // improvement keeps the smallest patch on ties.
                    if best.as_ref().is_none_or(|(_, c)| count > *c) {
                        best = Some((patch, count));
                    }
                }
                best.expect("frames_seen > 0 implies every cell has counts").0
            })
            .collect();
        Ok(Background {
            grid_cells: self.grid_cells,
            cell_pixels: self.cell_pixels,
            patches,
        })
    }
}

/// Fits the modal-patch background model from a dataset of frames.
pub fn fit_background(
    frames: &[Vec<u8>],
    grid_cells: usize,
    cell_pixels: usize,
) -> Result<Background> {
    let mut accum = BackgroundAccum::new(grid_cells, cell_pixels);
    for frame in frames {
        accum.add_frame(frame);
    }
    accum.finish()
}

impl Background {
    pub fn grid_cells(&self) -> usize {
        self.grid_cells
    }

    pub fn cell_pixels(&self) -> usize {
        self.cell_pixels
    }

    /// Patch length in bytes (3 channels interleaved).
    pub fn patch_dim(&self) -> usize {
        3 * self.cell_pixels * self.cell_pixels
    }

    pub fn cell_patch(&self, cell: usize) -> &[u8] {
        &self.patches[cell]
    }

    /// Rebuilds a background from stored patches (checkpoint loading).
    pub fn from_patches(
        grid_cells: usize,
        cell_pixels: usize,
        patches: Vec<Vec<u8>>,
    ) -> Result<Self> {
        let dim = 3 * cell_pixels * cell_pixels;
        if patches.len() != grid_cells * grid_cells || patches.iter().any(|p| p.len() != dim) {
            return Err(Error::argument("background patch table has wrong geometry"));
        }
        Ok(Background { grid_cells, cell_pixels, patches })
    }

    /// Marks every cell whose patch deviates from the background in any
    /// pixel, keeping the deviating patches.
    pub fn detect(&self, frame: &[u8]) -> Result<PresenceMap> {
        let side = self.grid_cells * self.cell_pixels;
        if frame.len() != 3 * side * side {
            return Err(Error::dimension(alloc::format!(
                "expected a {} byte frame, got {}",
                3 * side * side,
                frame.len()
            )));
        }
        let cells = self.grid_cells * self.grid_cells;
        let mut pres = Vec::with_capacity(cells);
        let mut patches = Vec::with_capacity(cells);
        for cell in 0..cells {
            let patch = extract_patch(frame, self.grid_cells, self.cell_pixels, cell);
            if patch == self.patches[cell] {
                pres.push(false);
                patches.push(None);
            } else {
                pres.push(true);
                patches.push(Some(patch));
            }
        }
        Ok(PresenceMap::from_parts(pres, patches))
    }
}
