//! Finite-difference verification of reverse-mode gradients.

use alloc::vec::Vec;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Relative error between an analytic and a central-difference derivative:
/// `|a - fd| / max(|a|, |fd|, 1e-8)`.
fn rel_err<T: Scalar>(analytic: T, fd: T) -> T {
    let denom = analytic.abs().max(fd.abs()).max(T::of(1e-8));
    (analytic - fd).abs() / denom
}

/// Checks the gradient of a scalar-valued function of one tensor.
///
/// `f` rebuilds the function inside the graph it is handed; it is invoked
/// once for the analytic pass and twice per coordinate for the central
/// differences. Returns the worst relative error over all coordinates.
pub fn grad_check<T, F>(f: F, x: &Tensor<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, NodeId) -> Result<NodeId>,
{
    if !(eps > T::zero()) {
        return Err(Error::argument("grad_check step must be positive"));
    }
    let mut graph = Graph::new();
    let xid = graph.leaf(x.clone(), true);
    let y = f(&mut graph, xid)?;
    if graph.value(y).numel() != 1 {
        return Err(Error::argument("grad_check requires a scalar-valued function"));
    }
    graph.backward(y)?;
    let analytic: Vec<T> = match graph.grad(xid) {
        Some(g) => g.data().to_vec(),
        None => alloc::vec![T::zero(); x.numel()],
    };

    let eval = |input: Tensor<T>| -> Result<T> {
        let mut g = Graph::inference();
        let id = g.leaf(input, false);
        let out = f(&mut g, id)?;
        Ok(g.value(out).item())
    };

    let mut worst = T::zero();
    for coord in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[coord] = plus.data()[coord] + eps;
        let mut minus = x.clone();
        minus.data_mut()[coord] = minus.data()[coord] - eps;
        let fd = (eval(plus)? - eval(minus)?) / (eps + eps);
        worst = worst.max(rel_err(analytic[coord], fd));
    }
    Ok(worst)
}

/// Checks stored gradients of an already-built graph against central
/// differences of its scalar `loss`, for every coordinate of every listed
/// leaf.
///
/// Uses incremental re-evaluation, so the cost per coordinate is
/// proportional to the part of the graph downstream of the perturbed leaf
/// rather than to the whole forward pass.
pub fn grad_check_graph<T: Scalar>(
    graph: &mut Graph<T>,
    loss: NodeId,
    leaves: &[NodeId],
    eps: T,
) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(Error::argument("grad_check step must be positive"));
    }
    graph.zero_grads();
    graph.backward(loss)?;
    let mut worst = T::zero();
    for &leaf in leaves {
        let analytic: Vec<T> = match graph.grad(leaf) {
            Some(g) => g.data().to_vec(),
            None => alloc::vec![T::zero(); graph.value(leaf).numel()],
        };
        let affected = graph.affected_from(leaf);
        for coord in 0..analytic.len() {
            let plus = graph.eval_perturbed(leaf, coord, eps, loss, &affected)?;
            let minus = graph.eval_perturbed(leaf, coord, -eps, loss, &affected)?;
            let fd = (plus - minus) / (eps + eps);
            worst = worst.max(rel_err(analytic[coord], fd));
        }
    }
    Ok(worst)
}
