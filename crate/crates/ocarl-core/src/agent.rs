//! The five agent variants, assembled from perception, discovery, and
//! reasoning.
//!
//! | variant          | category loss | reasoning        | discovery |
//! |------------------|---------------|------------------|-----------|
//! | `ocarl`          | weighted      | routed experts   | yes       |
//! | `ocarl_no_ocap`  | off           | routed experts   | yes       |
//! | `ocarl_no_ocmr`  | weighted      | universal        | yes       |
//! | `rrl`            | off           | universal        | no        |
//! | `ppo_plain`      | off           | flat perceptron  | no        |
//!
//! Every variant shares the same convolutional encoder. Discovery output is
//! computed once per observation at collection time (after confusion
//! masking) and carried alongside the frame, so the update phase replays
//! exactly the categories the policy acted under.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::nn::{self, BoundParams, ParamStore};
use crate::ocap::{self, Ocap, CELLS, FEATURES};
use crate::ocmr::{Ocmr, ReasonerKind};
use crate::scalar::Scalar;
use crate::uod::{confuse, CategoryPredictor};

const PLAIN_HIDDEN: usize = 256;
/// Weight of the category loss whenever a variant trains the category head.
pub const CATEGORY_WEIGHT: f64 = 0.01;

/// Which architecture an agent runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Ocarl,
    OcarlNoOcap,
    OcarlNoOcmr,
    Rrl,
    PpoPlain,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Ocarl,
        Variant::OcarlNoOcap,
        Variant::OcarlNoOcmr,
        Variant::Rrl,
        Variant::PpoPlain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ocarl => "ocarl",
            Variant::OcarlNoOcap => "ocarl_no_ocap",
            Variant::OcarlNoOcmr => "ocarl_no_ocmr",
            Variant::Rrl => "rrl",
            Variant::PpoPlain => "ppo_plain",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::argument(alloc::format!("unknown variant {name}")))
    }

    /// Category-loss weight this variant trains with.
    pub fn lambda(self) -> f64 {
        match self {
            Variant::Ocarl | Variant::OcarlNoOcmr => CATEGORY_WEIGHT,
            _ => 0.0,
        }
    }

    /// Whether the variant consumes discovery output at all.
    pub fn uses_discovery(self) -> bool {
        matches!(self, Variant::Ocarl | Variant::OcarlNoOcap | Variant::OcarlNoOcmr)
    }

    fn reasoner(self, categories: usize) -> Option<ReasonerKind> {
        match self {
            Variant::Ocarl | Variant::OcarlNoOcap => Some(ReasonerKind::Routed { categories }),
            Variant::OcarlNoOcmr | Variant::Rrl => Some(ReasonerKind::Universal),
            Variant::PpoPlain => None,
        }
    }
}

/// What the policy said about one observation.
#[derive(Clone, Debug)]
pub struct ObsEval {
    /// Softmaxed action probabilities.
    pub probs: Vec<f64>,
    /// State-value estimate.
    pub value: f64,
    /// Extended category per cell (after confusion), when discovery runs.
    pub cats: Option<Vec<usize>>,
}

/// Per-sample graph nodes the update loss is assembled from.
pub struct SampleNodes {
    /// `[1, actions]` raw logits.
    pub action_logits: NodeId,
    /// `[1, 1]` value estimate.
    pub value: NodeId,
    /// Category loss for this sample, when the variant trains one.
    pub cat_loss: Option<NodeId>,
}

/// A complete policy: parameters plus the wiring between modules.
pub struct Agent<T: Scalar> {
    variant: Variant,
    categories: usize,
    actions: usize,
    params: ParamStore<T>,
    ocap: Ocap,
    ocmr: Option<Ocmr>,
    predictor: Option<CategoryPredictor>,
    confusion_p: f64,
    confusion_rng: ChaCha8Rng,
}

impl<T: Scalar> Agent<T> {
    /// Builds a freshly initialized agent.
    ///
    /// Variants that consume discovery output require a fitted `predictor`
    /// whose category count matches; the others reject one. `confusion_p`
    /// masks each detected object to background with that probability at
    /// observation time.
    pub fn new(
        variant: Variant,
        categories: usize,
        actions: usize,
        seed: u64,
        predictor: Option<CategoryPredictor>,
        confusion_p: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confusion_p) {
            return Err(Error::argument("confusion probability must lie in [0, 1]"));
        }
        match (&predictor, variant.uses_discovery()) {
            (None, true) => {
                return Err(Error::argument(alloc::format!(
                    "variant {} needs a fitted category predictor",
                    variant.name()
                )));
            }
            (Some(_), false) => {
                return Err(Error::argument(alloc::format!(
                    "variant {} takes no category predictor",
                    variant.name()
                )));
            }
            (Some(pred), true) if pred.categories() != categories => {
                return Err(Error::argument(alloc::format!(
                    "predictor has {} categories, agent expects {categories}",
                    pred.categories()
                )));
            }
            _ => {}
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let with_fcat = variant.lambda() > 0.0;
        let ocap = Ocap::init(&mut params, &mut rng, categories, with_fcat)?;
        let ocmr = match variant.reasoner(categories) {
            Some(kind) => Some(Ocmr::init(&mut params, &mut rng, kind, FEATURES, actions)?),
            None => {
                nn::init_linear(&mut params, &mut rng, "plain.l1", FEATURES * CELLS, PLAIN_HIDDEN)?;
                nn::init_linear(&mut params, &mut rng, "plain.l2", PLAIN_HIDDEN, actions + 1)?;
                None
            }
        };
        let mut confusion_rng = ChaCha8Rng::seed_from_u64(seed);
        confusion_rng.set_stream(1);
        Ok(Agent {
            variant,
            categories,
            actions,
            params,
            ocap,
            ocmr,
            predictor,
            confusion_p,
            confusion_rng,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn predictor(&self) -> Option<&CategoryPredictor> {
        self.predictor.as_ref()
    }

    pub fn confusion(&self) -> f64 {
        self.confusion_p
    }

    /// Routes an object category to the background expert from here on.
    pub fn disable_category(&mut self, cat: usize) -> Result<()> {
        match &mut self.ocmr {
            Some(ocmr) => ocmr.disable_category(cat),
            None => Err(Error::state("this variant has no reasoning module")),
        }
    }

    /// Converts a CHW byte frame to the network's input tensor.
    pub fn frame_tensor(&self, frame: &[u8]) -> Result<Tensor<T>> {
        if frame.len() != 3 * 64 * 64 {
            return Err(Error::dimension("expected a 3x64x64 byte frame"));
        }
        let data: Vec<T> = frame.iter().map(|&b| T::of(b as f64 / 255.0)).collect();
        Tensor::from_vec(&[3, 64, 64], data)
    }

    /// Discovery pass for one frame: presence, confusion mask, categories.
    pub fn observe_categories(&mut self, frame: &[u8]) -> Result<Option<Vec<usize>>> {
        let Some(pred) = &self.predictor else {
            return Ok(None);
        };
        let map = pred.presence(frame)?;
        let map = confuse(&map, self.confusion_p, &mut self.confusion_rng)?;
        Ok(Some(pred.extended_categories(&map)?))
    }

    /// Shared forward pass; `cats` must agree with what `observe_categories`
    /// produced for the same frame.
    fn forward_nodes(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        image: NodeId,
        cats: Option<&[usize]>,
    ) -> Result<SampleNodes> {
        let z = self.ocap.encode(g, p, image)?;
        let cat_loss = if self.variant.lambda() > 0.0 {
            let targets = cats.ok_or_else(|| {
                Error::argument("this variant trains a category head and needs cell categories")
            })?;
            let logits = self.ocap.category_logits(g, p, z)?;
            Some(ocap::category_loss(g, logits, targets)?)
        } else {
            None
        };
        let (action_logits, value) = match &self.ocmr {
            Some(ocmr) => {
                let routed = matches!(ocmr.kind(), ReasonerKind::Routed { .. });
                let out = ocmr.forward(g, p, z, if routed { cats } else { None })?;
                (out.action_logits, out.value)
            }
            None => {
                let flat = g.reshape(z, &[1, FEATURES * CELLS])?;
                let h = nn::linear_layer(g, p, "plain.l1", flat)?;
                let h = g.relu(h);
                let out = nn::linear_layer(g, p, "plain.l2", h)?;
                let logits = g.slice_cols(out, 0, self.actions)?;
                let value = g.slice_cols(out, self.actions, self.actions + 1)?;
                (logits, value)
            }
        };
        Ok(SampleNodes { action_logits, value, cat_loss })
    }

    /// Training-graph forward for one sample. The caller owns the graph and
    /// the bound parameters so one binding serves a whole chunk of samples.
    pub fn training_forward(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        frame: &Tensor<T>,
        cats: Option<&[usize]>,
    ) -> Result<SampleNodes> {
        let image = g.leaf(frame.clone(), false);
        self.forward_nodes(g, p, image, cats)
    }

    /// Inference pass over a batch of frames: discovery, then policy.
    ///
    /// Advances the confusion stream once per frame, so batch boundaries do
    /// not affect which objects get masked.
    pub fn evaluate_frames(&mut self, frames: &[&[u8]]) -> Result<Vec<ObsEval>> {
        let mut cats_per_frame = Vec::with_capacity(frames.len());
        for frame in frames {
            cats_per_frame.push(self.observe_categories(frame)?);
        }
        let mut g = Graph::inference();
        let p = self.params.bind(&mut g, false);
        let mut out = Vec::with_capacity(frames.len());
        for (frame, cats) in frames.iter().zip(&cats_per_frame) {
            let tensor = self.frame_tensor(frame)?;
            let image = g.leaf(tensor, false);
            let nodes = self.forward_nodes(&mut g, &p, image, cats.as_deref())?;
            let probs_node = g.softmax(nodes.action_logits)?;
            let probs: Vec<f64> = g.value(probs_node).data().iter().map(|v| v.as_f64()).collect();
            let value = g.value(nodes.value).item().as_f64();
            out.push(ObsEval { probs, value, cats: cats.clone() });
        }
        Ok(out)
    }
}
