//! Object-category aware relational reasoning: coordinate embedding, one
//! self-attention block, category-routed expert perceptrons, and the shared
//! actor-critic head.
//!
//! Cell features enter as rows (row `i * W + j` is cell `(i, j)`). Each row
//! is tagged with its normalized coordinates, re-embedded, passed through a
//! single attention block without score scaling, and concatenated with its
//! attended counterpart. Rows are then dispatched to per-category expert
//! networks (or one universal network in ablations), and a max over cells
//! feeds the policy and value head.

use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::nn::{self, BoundParams, ParamStore};
use crate::scalar::Scalar;

const EXPERT_HIDDEN: usize = 64;
const HEAD_HIDDEN: usize = 64;

/// Whether rows are routed to per-category experts or one shared network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReasonerKind {
    /// One expert per object category plus a background expert.
    Routed { categories: usize },
    /// A single network applied to every row regardless of category.
    Universal,
}

/// Policy logits and state value produced by the reasoning head.
#[derive(Clone, Copy, Debug)]
pub struct PolicyOutput {
    /// `[1, actions]` raw logits.
    pub action_logits: NodeId,
    /// `[1, 1]` state-value estimate.
    pub value: NodeId,
}

/// Relational reasoning module over a feature grid.
pub struct Ocmr {
    kind: ReasonerKind,
    features: usize,
    actions: usize,
    /// Maps extended category -> expert index. Entry 0 (background) always
    /// points at the background expert; `disable_category` redirects an
    /// object category here as well. Empty for the universal kind.
    routing: Vec<usize>,
}

impl Ocmr {
    /// Registers all reasoning parameters in `store` and returns the module.
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut ChaCha8Rng,
        kind: ReasonerKind,
        features: usize,
        actions: usize,
    ) -> Result<Self> {
        if features == 0 {
            return Err(Error::argument("feature width must be positive"));
        }
        if actions == 0 {
            return Err(Error::argument("need at least one action"));
        }
        nn::init_linear(store, rng, "ocmr.embed", features + 2, features)?;
        nn::init_matrix(store, rng, "ocmr.attn.wq", features, features)?;
        nn::init_matrix(store, rng, "ocmr.attn.wk", features, features)?;
        nn::init_matrix(store, rng, "ocmr.attn.wv", features, features)?;
        let routing = match kind {
            ReasonerKind::Routed { categories } => {
                if categories == 0 {
                    return Err(Error::argument("routed reasoning needs at least one category"));
                }
                for k in 0..=categories {
                    nn::init_linear(store, rng, &alloc::format!("ocmr.expert.{k}.l1"), 2 * features, EXPERT_HIDDEN)?;
                    nn::init_linear(store, rng, &alloc::format!("ocmr.expert.{k}.l2"), EXPERT_HIDDEN, features)?;
                }
                // Extended category c starts at expert c - 1; background
                // (category 0) owns the final expert.
                let mut table = vec![categories; categories + 1];
                for c in 1..=categories {
                    table[c] = c - 1;
                }
                table
            }
            ReasonerKind::Universal => {
                nn::init_linear(store, rng, "ocmr.universal.l1", 2 * features, EXPERT_HIDDEN)?;
                nn::init_linear(store, rng, "ocmr.universal.l2", EXPERT_HIDDEN, features)?;
                Vec::new()
            }
        };
        nn::init_linear(store, rng, "ocmr.head.l1", features, HEAD_HIDDEN)?;
        nn::init_linear(store, rng, "ocmr.head.l2", HEAD_HIDDEN, actions + 1)?;
        Ok(Ocmr { kind, features, actions, routing })
    }

    pub fn kind(&self) -> ReasonerKind {
        self.kind
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    /// Current extended-category -> expert assignment (routed kind only).
    pub fn routing(&self) -> &[usize] {
        &self.routing
    }

    /// Permanently routes object category `cat` to the background expert.
    ///
    /// Parameters are untouched; only the dispatch table changes. The
    /// background entry itself cannot be redirected.
    pub fn disable_category(&mut self, cat: usize) -> Result<()> {
        let categories = match self.kind {
            ReasonerKind::Routed { categories } => categories,
            ReasonerKind::Universal => {
                return Err(Error::state("universal reasoning has no category routing"));
            }
        };
        if cat == 0 {
            return Err(Error::argument("background routing is fixed"));
        }
        if cat > categories {
            return Err(Error::argument(alloc::format!(
                "category {cat} out of range (1..={categories})"
            )));
        }
        self.routing[cat] = categories;
        Ok(())
    }

    /// Tags each cell with its normalized coordinates and re-embeds.
    ///
    /// Takes the `[F, H, W]` feature volume; returns `[H * W, F]` rows where
    /// row `i * W + j` saw `x = -1 + 2j / (W - 1)`, `y = -1 + 2i / (H - 1)`
    /// appended before the shared linear + ReLU map.
    pub fn add_coords<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z: NodeId,
    ) -> Result<NodeId> {
        let s = g.shape(z).to_vec();
        if s.len() != 3 || s[0] != self.features {
            return Err(Error::dimension(alloc::format!(
                "expected a [{}, H, W] volume, got {:?}",
                self.features, s
            )));
        }
        let (h, w) = (s[1], s[2]);
        if h < 2 || w < 2 {
            return Err(Error::dimension("coordinate grid needs at least 2 cells per side"));
        }
        let mut coords = Vec::with_capacity(h * w * 2);
        for i in 0..h {
            for j in 0..w {
                coords.push(T::of(-1.0 + 2.0 * j as f64 / (w - 1) as f64));
                coords.push(T::of(-1.0 + 2.0 * i as f64 / (h - 1) as f64));
            }
        }
        let coord_node = g.constant(Tensor::from_vec(&[h * w, 2], coords)?);
        let rows = g.cells_to_rows(z)?;
        let tagged = g.concat_cols(rows, coord_node)?;
        let embedded = nn::linear_layer(g, p, "ocmr.embed", tagged)?;
        Ok(g.relu(embedded))
    }

    /// Single-head self-attention: `softmax((Z Wq)(Z Wk)^T) Z Wv`.
    ///
    /// Scores are used as-is, with no magnitude normalization.
    pub fn self_attention<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z_hat: NodeId,
    ) -> Result<NodeId> {
        let wq = p.id("ocmr.attn.wq")?;
        let wk = p.id("ocmr.attn.wk")?;
        let wv = p.id("ocmr.attn.wv")?;
        let q = g.matmul(z_hat, wq)?;
        let k = g.matmul(z_hat, wk)?;
        let v = g.matmul(z_hat, wv)?;
        let kt = g.transpose(k)?;
        let scores = g.matmul(q, kt)?;
        let weights = g.softmax(scores)?;
        g.matmul(weights, v)
    }

    /// Dispatches each row of `z_tilde` to the expert of its category.
    ///
    /// `onehots` holds one one-hot vector of length `categories + 1` per
    /// row, flattened; anything other than exact one-hot rows is rejected.
    pub fn route<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z_tilde: NodeId,
        onehots: &[f64],
    ) -> Result<NodeId> {
        let categories = match self.kind {
            ReasonerKind::Routed { categories } => categories,
            ReasonerKind::Universal => {
                return Err(Error::state("universal reasoning has no experts to route to"));
            }
        };
        let rows = g.shape(z_tilde)[0];
        let width = categories + 1;
        if onehots.len() != rows * width {
            return Err(Error::dimension(alloc::format!(
                "expected {rows} one-hot vectors of length {width}, got {} values",
                onehots.len()
            )));
        }
        let mut cats = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &onehots[r * width..(r + 1) * width];
            let mut hot = None;
            for (c, &v) in row.iter().enumerate() {
                if v == 1.0 {
                    if hot.is_some() {
                        return Err(Error::argument("category vector is not one-hot"));
                    }
                    hot = Some(c);
                } else if v != 0.0 {
                    return Err(Error::argument("category vector is not one-hot"));
                }
            }
            cats.push(hot.ok_or_else(|| Error::argument("category vector is not one-hot"))?);
        }
        self.route_indices(g, p, z_tilde, &cats)
    }

    fn route_indices<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z_tilde: NodeId,
        cats: &[usize],
    ) -> Result<NodeId> {
        let categories = match self.kind {
            ReasonerKind::Routed { categories } => categories,
            ReasonerKind::Universal => unreachable!("checked by callers"),
        };
        let rows = g.shape(z_tilde)[0];
        if cats.len() != rows {
            return Err(Error::dimension("one category per row required"));
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); categories + 1];
        for (r, &cat) in cats.iter().enumerate() {
            if cat > categories {
                return Err(Error::argument(alloc::format!(
                    "extended category {cat} out of range (0..={categories})"
                )));
            }
            groups[self.routing[cat]].push(r);
        }
        let mut parts = Vec::new();
        let mut index = Vec::new();
        for (k, group) in groups.into_iter().enumerate() {
            if group.is_empty() {
                continue;
            }
            let picked = g.gather_rows(z_tilde, group.clone())?;
            let h = nn::linear_layer(g, p, &alloc::format!("ocmr.expert.{k}.l1"), picked)?;
            let h = g.relu(h);
            let out = nn::linear_layer(g, p, &alloc::format!("ocmr.expert.{k}.l2"), h)?;
            parts.push(out);
            index.push(group);
        }
        g.scatter_rows(&parts, index)
    }

    fn apply_universal<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z_tilde: NodeId,
    ) -> Result<NodeId> {
        let h = nn::linear_layer(g, p, "ocmr.universal.l1", z_tilde)?;
        let h = g.relu(h);
        nn::linear_layer(g, p, "ocmr.universal.l2", h)
    }

    /// Actor-critic head over the reasoned rows.
    ///
    /// Adds the residual connection `z_out + z_hat`, takes the per-feature
    /// max over all cell rows, and runs the shared 2-layer trunk whose
    /// output splits into action logits and the value.
    pub fn head<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z_out: NodeId,
        z_hat: NodeId,
    ) -> Result<PolicyOutput> {
        let summed = g.add(z_out, z_hat)?;
        let pooled = g.max_over_cells(summed)?;
        let pooled = g.reshape(pooled, &[1, self.features])?;
        let trunk = nn::linear_layer(g, p, "ocmr.head.l1", pooled)?;
        let trunk = g.relu(trunk);
        let out = nn::linear_layer(g, p, "ocmr.head.l2", trunk)?;
        let action_logits = g.slice_cols(out, 0, self.actions)?;
        let value = g.slice_cols(out, self.actions, self.actions + 1)?;
        Ok(PolicyOutput { action_logits, value })
    }

    /// Full reasoning pass over a `[F, H, W]` feature volume.
    ///
    /// Routed reasoning requires one extended category per cell in row-major
    /// cell order; universal reasoning requires `None`.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        z: NodeId,
        cats: Option<&[usize]>,
    ) -> Result<PolicyOutput> {
        let z_hat = self.add_coords(g, p, z)?;
        let q_hat = self.self_attention(g, p, z_hat)?;
        let z_tilde = g.concat_cols(q_hat, z_hat)?;
        let z_out = match (self.kind, cats) {
            (ReasonerKind::Routed { .. }, Some(cats)) => {
                self.route_indices(g, p, z_tilde, cats)?
            }
            (ReasonerKind::Routed { .. }, None) => {
                return Err(Error::argument("routed reasoning needs cell categories"));
            }
            (ReasonerKind::Universal, None) => self.apply_universal(g, p, z_tilde)?,
            (ReasonerKind::Universal, Some(_)) => {
                return Err(Error::argument("universal reasoning takes no categories"));
            }
        };
        self.head(g, p, z_out, z_hat)
    }
}
