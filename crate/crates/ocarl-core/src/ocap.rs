//! Object-category aware perception: the convolutional encoder plus the
//! per-cell category head and its auxiliary loss.
//!
//! The encoder follows the IMPALA residual design: three stages of 16, 32,
//! and 32 channels, each a stride-2 reducing convolution followed by two
//! residual pairs of 3x3 convolutions with pre-activation ReLU. A 3x64x64
//! image maps to a 32x8x8 feature volume, one feature column per grid cell.
//!
//! The category head `f_cat` is a 2-layer perceptron (hidden width 32)
//! applied to every cell with shared weights. It emits raw logits over the
//! extended category set (background plus the object categories); no softmax
//! is applied, the loss consumes logits directly.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::nn::{self, BoundParams, ParamStore};
use crate::scalar::Scalar;

/// Channel width of the final feature volume.
pub const FEATURES: usize = 32;
/// Side length of the feature grid (and of the environment's cell grid).
pub const GRID: usize = 8;
/// Cells in the feature grid.
pub const CELLS: usize = GRID * GRID;

const STAGE_CHANNELS: [usize; 3] = [16, 32, 32];
const INPUT_CHANNELS: usize = 3;
const INPUT_SIDE: usize = 64;
const FCAT_HIDDEN: usize = 32;

/// Encoder plus optional category head over `categories` object categories.
///
/// Variants trained without the category loss never allocate `f_cat`, so
/// `with_category_head` decides whether those parameters exist at all.
pub struct Ocap {
    categories: usize,
    with_category_head: bool,
}

impl Ocap {
    /// Registers all perception parameters in `store` and returns the module.
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        categories: usize,
        with_category_head: bool,
    ) -> Result<Self> {
        if categories == 0 {
            return Err(Error::argument("need at least one object category"));
        }
        let mut c_in = INPUT_CHANNELS;
        for (s, &c_out) in STAGE_CHANNELS.iter().enumerate() {
            nn::init_conv(store, rng, &alloc::format!("encoder.stage{s}.reduce"), c_out, c_in, 3)?;
            for r in 0..2 {
                nn::init_conv(store, rng, &alloc::format!("encoder.stage{s}.res{r}.a"), c_out, c_out, 3)?;
                nn::init_conv(store, rng, &alloc::format!("encoder.stage{s}.res{r}.b"), c_out, c_out, 3)?;
            }
            c_in = c_out;
        }
        if with_category_head {
            nn::init_linear(store, rng, "fcat.l1", FEATURES, FCAT_HIDDEN)?;
            nn::init_linear(store, rng, "fcat.l2", FCAT_HIDDEN, categories + 1)?;
        }
        Ok(Ocap { categories, with_category_head })
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn has_category_head(&self) -> bool {
        self.with_category_head
    }

    /// Encodes a `[3, 64, 64]` image into the `[32, 8, 8]` feature volume.
    pub fn encode<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        image: NodeId,
    ) -> Result<NodeId> {
        if g.shape(image) != [INPUT_CHANNELS, INPUT_SIDE, INPUT_SIDE] {
            return Err(Error::dimension(alloc::format!(
                "encoder expects a [3, 64, 64] image, got {:?}",
                g.shape(image)
            )));
        }
        let mut x = image;
        for s in 0..STAGE_CHANNELS.len() {
            x = nn::conv_layer(g, p, &alloc::format!("encoder.stage{s}.reduce"), x, 2, 1)?;
            for r in 0..2 {
                let h = g.relu(x);
                let h = nn::conv_layer(g, p, &alloc::format!("encoder.stage{s}.res{r}.a"), h, 1, 1)?;
                let h = g.relu(h);
                let h = nn::conv_layer(g, p, &alloc::format!("encoder.stage{s}.res{r}.b"), h, 1, 1)?;
                x = g.add(x, h)?;
            }
        }
        Ok(g.relu(x))
    }

    /// Applies `f_cat` to every cell of the feature volume.
    ///
    /// Returns raw logits as `[64, categories + 1]` rows in row-major cell
    /// order, i.e. row `i * 8 + j` holds cell `(i, j)`.
    pub fn category_logits<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z: NodeId,
    ) -> Result<NodeId> {
        if !self.with_category_head {
            return Err(Error::state("this perception module has no category head"));
        }
        if g.shape(z) != [FEATURES, GRID, GRID] {
            return Err(Error::dimension(alloc::format!(
                "category head expects a [32, 8, 8] volume, got {:?}",
                g.shape(z)
            )));
        }
        let rows = g.cells_to_rows(z)?;
        let h = nn::linear_layer(g, p, "fcat.l1", rows)?;
        let h = g.relu(h);
        nn::linear_layer(g, p, "fcat.l2", h)
    }
}

/// Category loss: the sum over cells of the cross-entropy between each
/// cell's logits and its target extended category.
///
/// `logits` must be `[cells, categories + 1]` and `targets` one label per
/// cell, in the same row order `category_logits` produces.
pub fn category_loss<T: Scalar>(
    g: &mut Graph<T>,
    logits: NodeId,
    targets: &[usize],
) -> Result<NodeId> {
    let tv: Vec<usize> = targets.to_vec();
    g.cross_entropy_rows(logits, tv)
}

/// Combined objective `rl_loss + lambda * cat_loss`.
///
/// With `lambda == 0.0` the category term may be absent; with a positive
/// `lambda` it is required.
pub fn total_loss<T: Scalar>(
    g: &mut Graph<T>,
    rl_loss: NodeId,
    cat_loss: Option<NodeId>,
    lambda: f64,
) -> Result<NodeId> {
    if !(lambda >= 0.0) {
        return Err(Error::argument("category loss weight must be nonnegative"));
    }
    match (cat_loss, lambda > 0.0) {
        (Some(cat), true) => {
            let scaled = g.scale(cat, lambda);
            g.add(rl_loss, scaled)
        }
        (_, false) => Ok(rl_loss),
        (None, true) => Err(Error::argument("positive category weight needs a category loss")),
    }
}
