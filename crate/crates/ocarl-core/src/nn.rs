//! Named parameter storage, initialization, and graph binding shared by all
//! network modules.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flat collection of named tensors with a stable insertion order.
///
/// The order parameters are registered in is the order they are bound,
/// serialized, and updated in, which keeps every reduction across them
/// deterministic.
pub struct ParamStore<T: Scalar> {
    entries: Vec<(String, Tensor<T>)>,
    index: BTreeMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), index: BTreeMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::argument(alloc::format!("parameter {name} already registered")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::argument(alloc::format!("unknown parameter {name}")))
    }

    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::argument(alloc::format!("unknown parameter {name}")))?;
        if self.entries[i].1.shape() != value.shape() {
            return Err(Error::dimension(alloc::format!(
                "parameter {name} has shape {:?}, got {:?}",
                self.entries[i].1.shape(),
                value.shape()
            )));
        }
        self.entries[i].1 = value;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Element type conversion (used when checkpoints, which store f64,
    /// meet a store of another precision).
    pub fn convert<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, tensor) in self.iter() {
            let data: Vec<U> = tensor.data().iter().map(|&v| U::of(v.as_f64())).collect();
            let converted = Tensor::from_vec(tensor.shape(), data).expect("same shape");
            out.add(name, converted).expect("source names are unique");
        }
        out
    }

    /// Adds every parameter to a graph as a leaf, in registration order.
    pub fn bind(&self, graph: &mut Graph<T>, trainable: bool) -> BoundParams {
        let mut ids = BTreeMap::new();
        for (name, tensor) in &self.entries {
            ids.insert(name.clone(), graph.leaf(tensor.clone(), trainable));
        }
        BoundParams { ids }
    }
}

/// Node ids of one store's parameters inside a particular graph.
pub struct BoundParams {
    ids: BTreeMap<String, NodeId>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::argument(alloc::format!("parameter {name} not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.ids.iter().map(|(n, &id)| (n.as_str(), id))
    }
}

// ---- initialization -----------------------------------------------------------

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data: Vec<T> = (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(shape, data).expect("shape matches length")
}

/// Registers `{prefix}.w` of shape `[fan_in, fan_out]` and `{prefix}.b`,
/// both drawn from the fan-in-scaled uniform distribution.
pub fn init_linear<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
) -> Result<()> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.add(alloc::format!("{prefix}.w"), uniform(rng, &[fan_in, fan_out], bound))?;
    store.add(alloc::format!("{prefix}.b"), uniform(rng, &[fan_out], bound))
}

/// Registers a `{prefix}.w` convolution kernel `[c_out, c_in, k, k]` plus
/// its `{prefix}.b` channel bias.
pub fn init_conv<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
) -> Result<()> {
    let bound = 1.0 / ((c_in * k * k) as f64).sqrt();
    store.add(alloc::format!("{prefix}.w"), uniform(rng, &[c_out, c_in, k, k], bound))?;
    store.add(alloc::format!("{prefix}.b"), uniform(rng, &[c_out], bound))
}

/// Registers a bias-free matrix `name` of shape `[rows, cols]`.
pub fn init_matrix<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let bound = 1.0 / (rows as f64).sqrt();
    store.add(name, uniform(rng, &[rows, cols], bound))
}

// ---- graph-building helpers ------------------------------------------------------

/// `x @ {prefix}.w + {prefix}.b` for row-batched input.
pub fn linear_layer<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let w = p.id(&alloc::format!("{prefix}.w"))?;
    let b = p.id(&alloc::format!("{prefix}.b"))?;
    let y = g.matmul(x, w)?;
    g.add_row_bias(y, b)
}

/// Convolution by `{prefix}.w` plus the `{prefix}.b` channel bias.
pub fn conv_layer<T: Scalar>(
    g: &mut Graph<T>,
    p: &BoundParams,
    prefix: &str,
    x: NodeId,
    stride: usize,
    pad: usize,
) -> Result<NodeId> {
    let w = p.id(&alloc::format!("{prefix}.w"))?;
    let b = p.id(&alloc::format!("{prefix}.b"))?;
    let y = g.conv2d(x, w, stride, pad)?;
    g.add_channel_bias(y, b)
}
