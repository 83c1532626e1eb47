//! Gradient accumulation, norm clipping, and the Adam step.
//!
//! Gradients and optimizer moments are kept in f64 regardless of the
//! parameter element type, so clipping and the step itself do not depend on
//! the training precision.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::scalar::Scalar;

/// Accumulates per-parameter gradients across backward passes.
pub struct GradBuffer {
    grads: BTreeMap<String, Vec<f64>>,
}

impl Default for GradBuffer {
    fn default() -> Self {
        Self::new()
    }
}

impl GradBuffer {
    pub fn new() -> Self {
        GradBuffer { grads: BTreeMap::new() }
    }

    /// Adds one parameter's gradient contribution.
    pub fn accumulate<T: Scalar>(&mut self, name: &str, grad: &Tensor<T>) {
        let slot = self
            .grads
            .entry(String::from(name))
            .or_insert_with(|| alloc::vec![0.0; grad.numel()]);
        for (acc, g) in slot.iter_mut().zip(grad.data()) {
            *acc += g.as_f64();
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.grads.get(name).map(|v| v.as_slice())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.grads.iter().map(|(n, g)| (n.as_str(), g.as_slice()))
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Vec<f64>)> {
        self.grads.iter_mut()
    }
}

/// Scales all gradients so their global L2 norm does not exceed `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut GradBuffer, max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(Error::argument("gradient norm ceiling must be positive"));
    }
    let mut sq = 0.0;
    for (_, g) in grads.iter() {
        for v in g {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for (_, g) in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
    Ok(norm)
}

/// Adam with bias correction.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

/// Snapshot of the optimizer's moments, for persisting and resuming runs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub steps: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::argument("learning rate must be positive"));
        }
        Ok(Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn state(&self) -> AdamState {
        AdamState { steps: self.steps, m: self.m.clone(), v: self.v.clone() }
    }

    pub fn set_state(&mut self, state: AdamState) {
        self.steps = state.steps;
        self.m = state.m;
        self.v = state.v;
    }

    /// Applies one update. Parameters without a gradient entry stay put and
    /// their moments do not advance (experts that saw no rows this batch).
    pub fn step<T: Scalar>(&mut self, params: &mut ParamStore<T>, grads: &GradBuffer) -> Result<()> {
        self.steps += 1;
        let bc1 = 1.0 - self.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - self.beta2.powi(self.steps as i32);
        let names: Vec<String> = params.names().map(String::from).collect();
        for name in names {
            let Some(grad) = grads.get(&name) else { continue };
            let current = params.get(&name)?;
            if grad.len() != current.numel() {
                return Err(Error::dimension(alloc::format!(
                    "gradient for {name} has {} values, parameter has {}",
                    grad.len(),
                    current.numel()
                )));
            }
            let m = self.m.entry(name.clone()).or_insert_with(|| alloc::vec![0.0; grad.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| alloc::vec![0.0; grad.len()]);
            let mut next = Vec::with_capacity(grad.len());
            for ((mi, vi), (&g, &w)) in
                m.iter_mut().zip(v.iter_mut()).zip(grad.iter().zip(current.data()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                next.push(T::of(w.as_f64() - self.lr * m_hat / (v_hat.sqrt() + self.eps)));
            }
            let shape = current.shape().to_vec();
            params.set(&name, Tensor::from_vec(&shape, next)?)?;
        }
        Ok(())
    }
}
