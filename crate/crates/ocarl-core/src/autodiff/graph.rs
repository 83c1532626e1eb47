//! The operation tape: forward builders, reverse sweep, incremental
//! re-evaluation.
//!
//! A [`Graph`] is an append-only arena of nodes. Builders validate shapes,
//! run the forward kernel, and record the operation; [`Graph::backward`]
//! sweeps the tape in reverse, accumulating gradients additively wherever a
//! value feeds several consumers. Graphs are cheap and short-lived: the
//! trainer builds one per forward/backward batch and drops it.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Index of a node within its graph.
pub type NodeId = usize;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul,
    Transpose,
    Conv2d { stride: usize, pad: usize },
    AddChannelBias,
    AddRowBias,
    Add,
    Sub,
    Mul,
    Neg,
    Scale(f64),
    AddConst(f64),
    Relu,
    Exp,
    Sin,
    Minimum,
    Clamp { lo: f64, hi: f64 },
    Softmax { axis: usize },
    LogSoftmaxRows,
    CrossEntropy { target: usize },
    CrossEntropyRows { targets: Vec<usize> },
    MaxOverCells,
    SumAll,
    PickElem { index: usize },
    Reshape { shape: Vec<usize> },
    CellsToRows,
    RowsToCells { h: usize, w: usize },
    ConcatCols,
    SliceCols { start: usize, end: usize },
    GatherRows { idx: Vec<usize> },
    ScatterRows { idx: Vec<Vec<usize>> },
}

struct Node<T: Scalar> {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor<T>,
    grad: Option<Tensor<T>>,
    requires_grad: bool,
    /// Forward byproduct kept for the backward pass (the im2col buffer for
    /// convolutions). Only stored on gradient-enabled graphs.
    aux: Option<Tensor<T>>,
}

/// Reverse-mode tape over tensors of element type `T`.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grad_enabled: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    /// A graph that records everything needed for `backward`.
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: true }
    }

    /// A forward-only graph: skips backward bookkeeping (used for rollouts).
    pub fn inference() -> Self {
        Graph { nodes: Vec::new(), grad_enabled: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    /// Accumulated gradient of a node, if backward has reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.nodes[id].grad.as_ref()
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn zero_grads(&mut self) {
        for node in self.nodes.iter_mut() {
            node.grad = None;
        }
    }

    // ---- node construction ------------------------------------------------

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        self.push(Op::Leaf, vec![], value, None, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.leaf(value, false)
    }

    fn push(
        &mut self,
        op: Op,
        inputs: Vec<NodeId>,
        value: Tensor<T>,
        aux: Option<Tensor<T>>,
        requires_grad: bool,
    ) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            inputs,
            value,
            grad: None,
            requires_grad,
            aux: if self.grad_enabled { aux } else { None },
        });
        id
    }

    fn record(&mut self, op: Op, inputs: Vec<NodeId>) -> NodeId {
        let requires = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        let vals: Vec<&Tensor<T>> = inputs.iter().map(|&i| &self.nodes[i].value).collect();
        let (value, aux) = compute(&op, &vals, self.grad_enabled);
        self.push(op, inputs, value, aux, requires)
    }

    // ---- op builders -------------------------------------------------------

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dimension(alloc::format!(
                "matmul expects [m,k]x[k,n], got {:?} x {:?}",
                sa,
                sb
            )));
        }
        Ok(self.record(Op::Matmul, vec![a, b]))
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        if self.shape(x).len() != 2 {
            return Err(Error::dimension("transpose expects a 2-d tensor"));
        }
        Ok(self.record(Op::Transpose, vec![x]))
    }

    pub fn conv2d(&mut self, x: NodeId, w: NodeId, stride: usize, pad: usize) -> Result<NodeId> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 3 || sw.len() != 4 || sx[0] != sw[1] {
            return Err(Error::dimension(alloc::format!(
                "conv2d expects x [c_in,h,w] and kernels [c_out,c_in,kh,kw], got {:?} and {:?}",
                sx,
                sw
            )));
        }
        let ho = kernels::conv_out_side(sx[1], sw[2], stride, pad);
        let wo = kernels::conv_out_side(sx[2], sw[3], stride, pad);
        if ho.is_none() || wo.is_none() {
            return Err(Error::dimension(alloc::format!(
                "conv2d kernel {:?} does not fit input {:?} with stride {stride}, pad {pad}",
                sw,
                sx
            )));
        }
        Ok(self.record(Op::Conv2d { stride, pad }, vec![x, w]))
    }

    pub fn add_channel_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() != 3 || sb.len() != 1 || sb[0] != sx[0] {
            return Err(Error::dimension("add_channel_bias expects [c,h,w] and [c]"));
        }
        Ok(self.record(Op::AddChannelBias, vec![x, b]))
    }

    pub fn add_row_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() != 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(Error::dimension("add_row_bias expects [r,n] and [n]"));
        }
        Ok(self.record(Op::AddRowBias, vec![x, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        Ok(self.record(Op::Add, vec![a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "sub")?;
        Ok(self.record(Op::Sub, vec![a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        Ok(self.record(Op::Mul, vec![a, b]))
    }

    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "minimum")?;
        Ok(self.record(Op::Minimum, vec![a, b]))
    }

    pub fn neg(&mut self, x: NodeId) -> NodeId {
        self.record(Op::Neg, vec![x])
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.record(Op::Scale(c), vec![x])
    }

    pub fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        self.record(Op::AddConst(c), vec![x])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.record(Op::Relu, vec![x])
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.record(Op::Exp, vec![x])
    }

    pub fn sin(&mut self, x: NodeId) -> NodeId {
        self.record(Op::Sin, vec![x])
    }

    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> Result<NodeId> {
        if !(lo <= hi) {
            return Err(Error::argument("clamp bounds must satisfy lo <= hi"));
        }
        Ok(self.record(Op::Clamp { lo, hi }, vec![x]))
    }

    /// Numerically stabilized softmax along `axis`.
    pub fn softmax_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        if axis >= self.shape(x).len() {
            return Err(Error::argument("softmax axis out of range"));
        }
        Ok(self.record(Op::Softmax { axis }, vec![x]))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let axis = self.shape(x).len() - 1;
        self.softmax_axis(x, axis)
    }

    /// Log-softmax over rows of a 2-d tensor (or over a vector).
    pub fn log_softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        if self.shape(x).len() > 2 {
            return Err(Error::dimension("log_softmax_rows expects 1-d or 2-d input"));
        }
        Ok(self.record(Op::LogSoftmaxRows, vec![x]))
    }

    /// `-log softmax(logits)[target]` for a vector of logits.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let n = self.numel(logits);
        if self.shape(logits).len() != 1 {
            return Err(Error::dimension("cross_entropy expects a 1-d logits tensor"));
        }
        if target >= n {
            return Err(Error::argument(alloc::format!(
                "cross_entropy target {target} out of range for {n} classes"
            )));
        }
        Ok(self.record(Op::CrossEntropy { target }, vec![logits]))
    }

    /// Sum over rows of per-row cross-entropy against integer targets.
    pub fn cross_entropy_rows(&mut self, logits: NodeId, targets: Vec<usize>) -> Result<NodeId> {
        let s = self.shape(logits);
        if s.len() != 2 {
            return Err(Error::dimension("cross_entropy_rows expects [rows, classes]"));
        }
        if targets.len() != s[0] {
            return Err(Error::dimension(alloc::format!(
                "cross_entropy_rows got {} targets for {} rows",
                targets.len(),
                s[0]
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= s[1]) {
            return Err(Error::argument(alloc::format!(
                "cross_entropy_rows target {bad} out of range for {} classes",
                s[1]
            )));
        }
        Ok(self.record(Op::CrossEntropyRows { targets }, vec![logits]))
    }

    /// Per-feature maximum over the row axis of `[rows, features]`;
    /// gradient flows to the first argmax row on ties.
    pub fn max_over_cells(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 2 || s[0] == 0 {
            return Err(Error::dimension("max_over_cells expects [rows >= 1, features]"));
        }
        Ok(self.record(Op::MaxOverCells, vec![x]))
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        self.record(Op::SumAll, vec![x])
    }

    /// Extracts one element (by flat index) as a scalar node.
    pub fn pick_elem(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        if index >= self.numel(x) {
            return Err(Error::argument("pick_elem index out of range"));
        }
        Ok(self.record(Op::PickElem { index }, vec![x]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let n: usize = shape.iter().product();
        if n != self.numel(x) {
            return Err(Error::dimension("reshape changes element count"));
        }
        Ok(self.record(Op::Reshape { shape: shape.to_vec() }, vec![x]))
    }

    /// `[f,h,w] -> [h*w, f]`, cell `(i,j)` becoming row `i*w + j`.
    pub fn cells_to_rows(&mut self, x: NodeId) -> Result<NodeId> {
        if self.shape(x).len() != 3 {
            return Err(Error::dimension("cells_to_rows expects [f,h,w]"));
        }
        Ok(self.record(Op::CellsToRows, vec![x]))
    }

    /// Inverse of [`Graph::cells_to_rows`].
    pub fn rows_to_cells(&mut self, x: NodeId, h: usize, w: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 2 || s[0] != h * w {
            return Err(Error::dimension("rows_to_cells expects [h*w, f]"));
        }
        Ok(self.record(Op::RowsToCells { h, w }, vec![x]))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::dimension("concat_cols expects 2-d inputs with equal rows"));
        }
        Ok(self.record(Op::ConcatCols, vec![a, b]))
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 2 || start >= end || end > s[1] {
            return Err(Error::dimension("slice_cols range out of bounds"));
        }
        Ok(self.record(Op::SliceCols { start, end }, vec![x]))
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Vec<usize>) -> Result<NodeId> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::dimension("gather_rows expects a 2-d tensor"));
        }
        if idx.iter().any(|&r| r >= s[0]) {
            return Err(Error::argument("gather_rows index out of range"));
        }
        Ok(self.record(Op::GatherRows { idx }, vec![x]))
    }

    /// Reassembles rows from disjoint parts: `idx[k][r]` is the destination
    /// row of part `k`'s row `r`. The index lists must partition the output.
    pub fn scatter_rows(&mut self, parts: &[NodeId], idx: Vec<Vec<usize>>) -> Result<NodeId> {
        if parts.is_empty() || parts.len() != idx.len() {
            return Err(Error::argument("scatter_rows needs one index list per part"));
        }
        let cols = self.shape(parts[0])[1];
        let mut rows = 0;
        for (&p, list) in parts.iter().zip(idx.iter()) {
            let s = self.shape(p);
            if s.len() != 2 || s[1] != cols {
                return Err(Error::dimension("scatter_rows parts must share column count"));
            }
            if s[0] != list.len() {
                return Err(Error::dimension("scatter_rows index list length mismatch"));
            }
            rows += list.len();
        }
        let mut seen = vec![false; rows];
        for list in &idx {
            for &r in list {
                if r >= rows || seen[r] {
                    return Err(Error::argument("scatter_rows indices must partition the output rows"));
                }
                seen[r] = true;
            }
        }
        Ok(self.record(Op::ScatterRows { idx }, parts.to_vec()))
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep seeded with 1. Repeated calls accumulate into the same
    /// gradient buffers.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        self.backward_seeded(loss, T::one())
    }

    /// Reverse sweep with an explicit seed (used to fold batch-mean scaling
    /// into the pass).
    pub fn backward_seeded(&mut self, loss: NodeId, seed: T) -> Result<()> {
        if !self.grad_enabled {
            return Err(Error::state("backward on a forward-only graph"));
        }
        if self.numel(loss) != 1 {
            return Err(Error::argument("backward requires a scalar loss"));
        }
        let mut scratch: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        scratch[loss] = Some(Tensor::from_vec(self.shape(loss), vec![seed]).expect("scalar"));
        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(gout) = scratch[id].take() else { continue };
            self.distribute(id, &gout, &mut scratch);
            match &mut self.nodes[id].grad {
                Some(acc) => {
                    for (a, g) in acc.data_mut().iter_mut().zip(gout.data()) {
                        *a = *a + *g;
                    }
                }
                slot => *slot = Some(gout),
            }
        }
        Ok(())
    }

    /// Propagates `gout` at node `id` into the scratch gradients of its
    /// inputs.
    fn distribute(&self, id: NodeId, gout: &Tensor<T>, scratch: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[id];
        let needs: Vec<bool> = node
            .inputs
            .iter()
            .map(|&i| self.nodes[i].requires_grad)
            .collect();
        if needs.iter().all(|&n| !n) {
            return;
        }
        let mut grads: Vec<Option<Tensor<T>>> = node.inputs.iter().map(|_| None).collect();
        let inputs: Vec<&Tensor<T>> = node.inputs.iter().map(|&i| &self.nodes[i].value).collect();
        backward_op(
            &node.op,
            &inputs,
            &node.value,
            node.aux.as_ref(),
            gout,
            &needs,
            &mut grads,
        );
        for (&input, grad) in node.inputs.iter().zip(grads.into_iter()) {
            let Some(grad) = grad else { continue };
            match &mut scratch[input] {
                Some(acc) => {
                    for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                        *a = *a + *g;
                    }
                }
                empty => *empty = Some(grad),
            }
        }
    }

    // ---- incremental re-evaluation ------------------------------------------

    /// Nodes (transitively) affected by perturbing `leaf`.
    pub fn affected_from(&self, leaf: NodeId) -> Vec<bool> {
        let mut affected = vec![false; self.nodes.len()];
        affected[leaf] = true;
        for id in leaf + 1..self.nodes.len() {
            affected[id] = self.nodes[id].inputs.iter().any(|&i| affected[i]);
        }
        affected
    }

    /// Recomputes `output`'s scalar value with `leaf[coord] += delta`,
    /// re-evaluating only the nodes downstream of the perturbation. The graph
    /// itself is not modified.
    ///
    /// This is what makes finite-difference checks over the full network
    /// affordable: a perturbed deep-layer parameter recomputes only the tail
    /// of the forward pass.
    pub fn eval_perturbed(
        &self,
        leaf: NodeId,
        coord: usize,
        delta: T,
        output: NodeId,
        affected: &[bool],
    ) -> Result<T> {
        if self.numel(output) != 1 {
            return Err(Error::argument("eval_perturbed requires a scalar output"));
        }
        if coord >= self.numel(leaf) {
            return Err(Error::argument("eval_perturbed coordinate out of range"));
        }
        if !affected[output] {
            return Ok(self.nodes[output].value.item());
        }
        let mut scratch: Vec<Option<Tensor<T>>> = (0..=output).map(|_| None).collect();
        let mut perturbed = self.nodes[leaf].value.clone();
        perturbed.data_mut()[coord] = perturbed.data()[coord] + delta;
        scratch[leaf] = Some(perturbed);
        for id in leaf + 1..=output {
            if !affected[id] {
                continue;
            }
            let vals: Vec<&Tensor<T>> = self.nodes[id]
                .inputs
                .iter()
                .map(|&i| scratch[i].as_ref().unwrap_or(&self.nodes[i].value))
                .collect();
            let (value, _) = compute(&self.nodes[id].op, &vals, false);
            scratch[id] = Some(value);
        }
        Ok(scratch[output].as_ref().expect("affected output").item())
    }

    // ---- small helpers ------------------------------------------------------

    /// Shape of a node's value.
    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id].value.shape()
    }

    fn numel(&self, id: NodeId) -> usize {
        self.nodes[id].value.numel()
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dimension(alloc::format!(
                "{what} expects equal shapes, got {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }
}

// ---- forward kernels ---------------------------------------------------------

/// Axis decomposition used by the softmax forward/backward.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, n, inner)
}

fn compute<T: Scalar>(op: &Op, inputs: &[&Tensor<T>], want_aux: bool) -> (Tensor<T>, Option<Tensor<T>>) {
    match op {
        Op::Leaf => unreachable!("leaves are never recomputed"),
        Op::Matmul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut c = Tensor::zeros(&[m, n]);
            kernels::gemm(m, k, n, a.data(), b.data(), c.data_mut());
            (c, None)
        }
        Op::Transpose => {
            let x = inputs[0];
            let (r, c) = (x.shape()[0], x.shape()[1]);
            let mut out = Tensor::zeros(&[c, r]);
            kernels::transpose(r, c, x.data(), out.data_mut());
            (out, None)
        }
        Op::Conv2d { stride, pad } => {
            let (x, w) = (inputs[0], inputs[1]);
            let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (co, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
            let ho = kernels::conv_out_side(h, kh, *stride, *pad).expect("validated");
            let wo = kernels::conv_out_side(wd, kw, *stride, *pad).expect("validated");
            let kvol = ci * kh * kw;
            let mut col = Tensor::zeros(&[kvol, ho * wo]);
            kernels::im2col(x.data(), ci, h, wd, kh, kw, *stride, *pad, ho, wo, col.data_mut());
            let mut out = Tensor::zeros(&[co, ho, wo]);
            kernels::gemm(co, kvol, ho * wo, w.data(), col.data(), out.data_mut());
            (out, if want_aux { Some(col) } else { None })
        }
        Op::AddChannelBias => {
            let (x, b) = (inputs[0], inputs[1]);
            let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let mut out = x.clone();
            for ch in 0..c {
                let bias = b.data()[ch];
                for v in &mut out.data_mut()[ch * h * w..(ch + 1) * h * w] {
                    *v = *v + bias;
                }
            }
            (out, None)
        }
        Op::AddRowBias => {
            let (x, b) = (inputs[0], inputs[1]);
            let (r, n) = (x.shape()[0], x.shape()[1]);
            let mut out = x.clone();
            for i in 0..r {
                let row = &mut out.data_mut()[i * n..(i + 1) * n];
                for (v, &bias) in row.iter_mut().zip(b.data()) {
                    *v = *v + bias;
                }
            }
            (out, None)
        }
        Op::Add => (zip_map(inputs[0], inputs[1], |a, b| a + b), None),
        Op::Sub => (zip_map(inputs[0], inputs[1], |a, b| a - b), None),
        Op::Mul => (zip_map(inputs[0], inputs[1], |a, b| a * b), None),
        Op::Minimum => (zip_map(inputs[0], inputs[1], |a, b| if a <= b { a } else { b }), None),
        Op::Neg => (inputs[0].map(|v| -v), None),
        Op::Scale(c) => {
            let c = T::of(*c);
            (inputs[0].map(|v| v * c), None)
        }
        Op::AddConst(c) => {
            let c = T::of(*c);
            (inputs[0].map(|v| v + c), None)
        }
        Op::Relu => (inputs[0].map(|v| if v > T::zero() { v } else { T::zero() }), None),
        Op::Exp => (inputs[0].map(|v| v.exp()), None),
        Op::Sin => (inputs[0].map(|v| v.sin()), None),
        Op::Clamp { lo, hi } => {
            let (lo, hi) = (T::of(*lo), T::of(*hi));
            (inputs[0].map(|v| v.min(hi).max(lo)), None)
        }
        Op::Softmax { axis } => {
            let x = inputs[0];
            let (outer, n, inner) = axis_split(x.shape(), *axis);
            let mut out = Tensor::zeros(x.shape());
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    let idx = |j: usize| base + j * inner;
                    let mut maxv = x.data()[idx(0)];
                    for j in 1..n {
                        maxv = maxv.max(x.data()[idx(j)]);
                    }
                    let mut sum = T::zero();
                    for j in 0..n {
                        let e = (x.data()[idx(j)] - maxv).exp();
                        out.data_mut()[idx(j)] = e;
                        sum = sum + e;
                    }
                    let inv = T::one() / sum;
                    for j in 0..n {
                        out.data_mut()[idx(j)] = out.data_mut()[idx(j)] * inv;
                    }
                }
            }
            (out, None)
        }
        Op::LogSoftmaxRows => {
            let x = inputs[0];
            let (r, n) = row_view(x);
            let mut out = Tensor::zeros(x.shape());
            for i in 0..r {
                let row = &x.data()[i * n..(i + 1) * n];
                let dst = &mut out.data_mut()[i * n..(i + 1) * n];
                log_softmax_into(row, dst);
            }
            (out, None)
        }
        Op::CrossEntropy { target } => {
            let x = inputs[0];
            let mut buf = vec![T::zero(); x.numel()];
            log_softmax_into(x.data(), &mut buf);
            (Tensor::scalar(-buf[*target]), None)
        }
        Op::CrossEntropyRows { targets } => {
            let x = inputs[0];
            let (r, n) = row_view(x);
            let mut buf = vec![T::zero(); n];
            let mut total = T::zero();
            for i in 0..r {
                log_softmax_into(&x.data()[i * n..(i + 1) * n], &mut buf);
                total = total - buf[targets[i]];
            }
            (Tensor::scalar(total), None)
        }
        Op::MaxOverCells => {
            let x = inputs[0];
            let (r, f) = (x.shape()[0], x.shape()[1]);
            let mut out = Tensor::from_vec(&[f], x.data()[..f].to_vec()).expect("shape");
            for i in 1..r {
                let row = &x.data()[i * f..(i + 1) * f];
                for (o, &v) in out.data_mut().iter_mut().zip(row) {
                    if v > *o {
                        *o = v;
                    }
                }
            }
            (out, None)
        }
        Op::SumAll => {
            let mut s = T::zero();
            for &v in inputs[0].data() {
                s = s + v;
            }
            (Tensor::scalar(s), None)
        }
        Op::PickElem { index } => (Tensor::scalar(inputs[0].data()[*index]), None),
        Op::Reshape { shape } => (
            Tensor::from_vec(shape, inputs[0].data().to_vec()).expect("validated"),
            None,
        ),
        Op::CellsToRows => {
            let x = inputs[0];
            let (f, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let hw = h * w;
            let mut out = Tensor::zeros(&[hw, f]);
            for c in 0..f {
                let plane = &x.data()[c * hw..(c + 1) * hw];
                for (cell, &v) in plane.iter().enumerate() {
                    out.data_mut()[cell * f + c] = v;
                }
            }
            (out, None)
        }
        Op::RowsToCells { h, w } => {
            let x = inputs[0];
            let f = x.shape()[1];
            let hw = h * w;
            let mut out = Tensor::zeros(&[f, *h, *w]);
            for cell in 0..hw {
                let row = &x.data()[cell * f..(cell + 1) * f];
                for (c, &v) in row.iter().enumerate() {
                    out.data_mut()[c * hw + cell] = v;
                }
            }
            (out, None)
        }
        Op::ConcatCols => {
            let (a, b) = (inputs[0], inputs[1]);
            let (r, na, nb) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let mut out = Tensor::zeros(&[r, na + nb]);
            for i in 0..r {
                let dst = &mut out.data_mut()[i * (na + nb)..(i + 1) * (na + nb)];
                dst[..na].copy_from_slice(&a.data()[i * na..(i + 1) * na]);
                dst[na..].copy_from_slice(&b.data()[i * nb..(i + 1) * nb]);
            }
            (out, None)
        }
        Op::SliceCols { start, end } => {
            let x = inputs[0];
            let (r, n) = (x.shape()[0], x.shape()[1]);
            let width = end - start;
            let mut out = Tensor::zeros(&[r, width]);
            for i in 0..r {
                out.data_mut()[i * width..(i + 1) * width]
                    .copy_from_slice(&x.data()[i * n + start..i * n + end]);
            }
            (out, None)
        }
        Op::GatherRows { idx } => {
            let x = inputs[0];
            let n = x.shape()[1];
            let mut out = Tensor::zeros(&[idx.len(), n]);
            for (row, &src) in idx.iter().enumerate() {
                out.data_mut()[row * n..(row + 1) * n]
                    .copy_from_slice(&x.data()[src * n..(src + 1) * n]);
            }
            (out, None)
        }
        Op::ScatterRows { idx } => {
            let n = inputs[0].shape()[1];
            let rows: usize = idx.iter().map(|list| list.len()).sum();
            let mut out = Tensor::zeros(&[rows, n]);
            for (part, list) in inputs.iter().zip(idx.iter()) {
                for (row, &dst) in list.iter().enumerate() {
                    out.data_mut()[dst * n..(dst + 1) * n]
                        .copy_from_slice(&part.data()[row * n..(row + 1) * n]);
                }
            }
            (out, None)
        }
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_vec(a.shape(), data).expect("shapes validated")
}

fn row_view<T: Scalar>(x: &Tensor<T>) -> (usize, usize) {
    match x.shape() {
        [n] => (1, *n),
        [r, n] => (*r, *n),
        other => panic!("expected 1-d or 2-d tensor, got {other:?}"),
    }
}

fn log_softmax_into<T: Scalar>(row: &[T], out: &mut [T]) {
    let mut maxv = row[0];
    for &v in &row[1..] {
        maxv = maxv.max(v);
    }
    let mut sum = T::zero();
    for &v in row {
        sum = sum + (v - maxv).exp();
    }
    let lse = maxv + sum.ln();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = v - lse;
    }
}

fn softmax_from_logits<T: Scalar>(row: &[T], out: &mut [T]) {
    let mut maxv = row[0];
    for &v in &row[1..] {
        maxv = maxv.max(v);
    }
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - maxv).exp();
        *o = e;
        sum = sum + e;
    }
    let inv = T::one() / sum;
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

// ---- backward kernels ----------------------------------------------------------

/// Computes per-input gradients for one node. `needs[i]` gates work for
/// inputs that don't require gradients.
#[allow(clippy::too_many_arguments)]
fn backward_op<T: Scalar>(
    op: &Op,
    inputs: &[&Tensor<T>],
    value: &Tensor<T>,
    aux: Option<&Tensor<T>>,
    gout: &Tensor<T>,
    needs: &[bool],
    grads: &mut [Option<Tensor<T>>],
) {
    match op {
        Op::Leaf => {}
        Op::Matmul => {
            let (a, b) = (inputs[0], inputs[1]);
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            if needs[0] {
                let mut da = Tensor::zeros(&[m, k]);
                kernels::gemm_nt(m, n, k, gout.data(), b.data(), da.data_mut());
                grads[0] = Some(da);
            }
            if needs[1] {
                let mut db = Tensor::zeros(&[k, n]);
                kernels::gemm_tn(m, k, n, a.data(), gout.data(), db.data_mut());
                grads[1] = Some(db);
            }
        }
        Op::Transpose => {
            if needs[0] {
                let (c, r) = (value.shape()[0], value.shape()[1]);
                let mut dx = Tensor::zeros(&[r, c]);
                kernels::transpose(c, r, gout.data(), dx.data_mut());
                grads[0] = Some(dx);
            }
        }
        Op::Conv2d { stride, pad } => {
            let (x, w) = (inputs[0], inputs[1]);
            let col = aux.expect("conv2d backward requires the stored im2col buffer");
            let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (co, _, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
            let (ho, wo) = (value.shape()[1], value.shape()[2]);
            let kvol = ci * kh * kw;
            let pixels = ho * wo;
            if needs[1] {
                // dW = dOut @ colᵀ, flattened over the spatial axis.
                let mut dw = Tensor::zeros(&[co, ci, kh, kw]);
                kernels::gemm_nt(co, pixels, kvol, gout.data(), col.data(), dw.data_mut());
                grads[1] = Some(dw);
            }
            if needs[0] {
                // dcol = Wᵀ @ dOut, then add each tap's shifted grid onto the image.
                let mut dcol = vec![T::zero(); kvol * pixels];
                kernels::gemm_tn(co, kvol, pixels, w.data(), gout.data(), &mut dcol);
                let mut dx = Tensor::zeros(&[ci, h, wd]);
                kernels::col2im(&dcol, ci, h, wd, kh, kw, *stride, *pad, ho, wo, dx.data_mut());
                grads[0] = Some(dx);
            }
        }
        Op::AddChannelBias => {
            if needs[0] {
                grads[0] = Some(gout.clone());
            }
            if needs[1] {
                let (c, h, w) = (inputs[0].shape()[0], inputs[0].shape()[1], inputs[0].shape()[2]);
                let mut db = Tensor::zeros(&[c]);
                for ch in 0..c {
                    let mut s = T::zero();
                    for &g in &gout.data()[ch * h * w..(ch + 1) * h * w] {
                        s = s + g;
                    }
                    db.data_mut()[ch] = s;
                }
                grads[1] = Some(db);
            }
        }
        Op::AddRowBias => {
            if needs[0] {
                grads[0] = Some(gout.clone());
            }
            if needs[1] {
                let (r, n) = (inputs[0].shape()[0], inputs[0].shape()[1]);
                let mut db = Tensor::zeros(&[n]);
                for i in 0..r {
                    kernels::axpy(T::one(), &gout.data()[i * n..(i + 1) * n], db.data_mut());
                }
                grads[1] = Some(db);
            }
        }
        Op::Add => {
            if needs[0] {
                grads[0] = Some(gout.clone());
            }
            if needs[1] {
                grads[1] = Some(gout.clone());
            }
        }
        Op::Sub => {
            if needs[0] {
                grads[0] = Some(gout.clone());
            }
            if needs[1] {
                grads[1] = Some(gout.map(|g| -g));
            }
        }
        Op::Mul => {
            if needs[0] {
                grads[0] = Some(zip_map(gout, inputs[1], |g, b| g * b));
            }
            if needs[1] {
                grads[1] = Some(zip_map(gout, inputs[0], |g, a| g * a));
            }
        }
        Op::Minimum => {
            // Ties route the gradient to the first argument.
            let (a, b) = (inputs[0], inputs[1]);
            if needs[0] {
                let data = gout
                    .data()
                    .iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(&g, (&x, &y))| if x <= y { g } else { T::zero() })
                    .collect();
                grads[0] = Some(Tensor::from_vec(a.shape(), data).expect("shape"));
            }
            if needs[1] {
                let data = gout
                    .data()
                    .iter()
                    .zip(a.data().iter().zip(b.data()))
                    .map(|(&g, (&x, &y))| if x <= y { T::zero() } else { g })
                    .collect();
                grads[1] = Some(Tensor::from_vec(b.shape(), data).expect("shape"));
            }
        }
        Op::Neg => {
            if needs[0] {
                grads[0] = Some(gout.map(|g| -g));
            }
        }
        Op::Scale(c) => {
            if needs[0] {
                let c = T::of(*c);
                grads[0] = Some(gout.map(|g| g * c));
            }
        }
        Op::AddConst(_) => {
            if needs[0] {
                grads[0] = Some(gout.clone());
            }
        }
        Op::Relu => {
            if needs[0] {
                // Subgradient at exactly zero is zero.
                grads[0] = Some(zip_map(gout, inputs[0], |g, x| {
                    if x > T::zero() {
                        g
                    } else {
                        T::zero()
                    }
                }));
            }
        }
        Op::Exp => {
            if needs[0] {
                grads[0] = Some(zip_map(gout, value, |g, y| g * y));
            }
        }
        Op::Sin => {
            if needs[0] {
                grads[0] = Some(zip_map(gout, inputs[0], |g, x| g * x.cos()));
            }
        }
        Op::Clamp { lo, hi } => {
            if needs[0] {
                let (lo, hi) = (T::of(*lo), T::of(*hi));
                grads[0] = Some(zip_map(gout, inputs[0], |g, x| {
                    if x >= lo && x <= hi {
                        g
                    } else {
                        T::zero()
                    }
                }));
            }
        }
        Op::Softmax { axis } => {
            if needs[0] {
                let y = value;
                let (outer, n, inner) = axis_split(y.shape(), *axis);
                let mut dx = Tensor::zeros(y.shape());
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * n * inner + i;
                        let idx = |j: usize| base + j * inner;
                        let mut dotv = T::zero();
                        for j in 0..n {
                            dotv = dotv + gout.data()[idx(j)] * y.data()[idx(j)];
                        }
                        for j in 0..n {
                            let yj = y.data()[idx(j)];
                            dx.data_mut()[idx(j)] = yj * (gout.data()[idx(j)] - dotv);
                        }
                    }
                }
                grads[0] = Some(dx);
            }
        }
        Op::LogSoftmaxRows => {
            if needs[0] {
                let (r, n) = row_view(value);
                let mut dx = Tensor::zeros(value.shape());
                for i in 0..r {
                    let yrow = &value.data()[i * n..(i + 1) * n];
                    let grow = &gout.data()[i * n..(i + 1) * n];
                    let mut gsum = T::zero();
                    for &g in grow {
                        gsum = gsum + g;
                    }
                    let drow = &mut dx.data_mut()[i * n..(i + 1) * n];
                    for j in 0..n {
                        drow[j] = grow[j] - yrow[j].exp() * gsum;
                    }
                }
                grads[0] = Some(dx);
            }
        }
        Op::CrossEntropy { target } => {
            if needs[0] {
                let x = inputs[0];
                let g = gout.item();
                let mut probs = vec![T::zero(); x.numel()];
                softmax_from_logits(x.data(), &mut probs);
                probs[*target] = probs[*target] - T::one();
                for p in probs.iter_mut() {
                    *p = *p * g;
                }
                grads[0] = Some(Tensor::from_vec(x.shape(), probs).expect("shape"));
            }
        }
        Op::CrossEntropyRows { targets } => {
            if needs[0] {
                let x = inputs[0];
                let (r, n) = row_view(x);
                let g = gout.item();
                let mut dx = Tensor::zeros(x.shape());
                for i in 0..r {
                    let row = &x.data()[i * n..(i + 1) * n];
                    let drow = &mut dx.data_mut()[i * n..(i + 1) * n];
                    softmax_from_logits(row, drow);
                    drow[targets[i]] = drow[targets[i]] - T::one();
                    for v in drow.iter_mut() {
                        *v = *v * g;
                    }
                }
                grads[0] = Some(dx);
            }
        }
        Op::MaxOverCells => {
            if needs[0] {
                let x = inputs[0];
                let (r, f) = (x.shape()[0], x.shape()[1]);
                let mut dx = Tensor::zeros(&[r, f]);
                for c in 0..f {
                    let mut best_row = 0;
                    let mut best = x.data()[c];
                    for i in 1..r {
                        let v = x.data()[i * f + c];
                        if v > best {
                            best = v;
                            best_row = i;
                        }
                    }
                    dx.data_mut()[best_row * f + c] = gout.data()[c];
                }
                grads[0] = Some(dx);
            }
        }
        Op::SumAll => {
            if needs[0] {
                grads[0] = Some(Tensor::filled(inputs[0].shape(), gout.item()));
            }
        }
        Op::PickElem { index } => {
            if needs[0] {
                let mut dx = Tensor::zeros(inputs[0].shape());
                dx.data_mut()[*index] = gout.item();
                grads[0] = Some(dx);
            }
        }
        Op::Reshape { .. } => {
            if needs[0] {
                grads[0] = Some(
                    gout.reshaped(inputs[0].shape())
                        .expect("reshape backward preserves element count"),
                );
            }
        }
        Op::CellsToRows => {
            if needs[0] {
                let x = inputs[0];
                let (f, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let hw = h * w;
                let mut dx = Tensor::zeros(&[f, h, w]);
                for c in 0..f {
                    let plane = &mut dx.data_mut()[c * hw..(c + 1) * hw];
                    for (cell, v) in plane.iter_mut().enumerate() {
                        *v = gout.data()[cell * f + c];
                    }
                }
                grads[0] = Some(dx);
            }
        }
        Op::RowsToCells { h, w } => {
            if needs[0] {
                let f = inputs[0].shape()[1];
                let hw = h * w;
                let mut dx = Tensor::zeros(&[hw, f]);
                for cell in 0..hw {
                    let row = &mut dx.data_mut()[cell * f..(cell + 1) * f];
                    for (c, v) in row.iter_mut().enumerate() {
                        *v = gout.data()[c * hw + cell];
                    }
                }
                grads[0] = Some(dx);
            }
        }
        Op::ConcatCols => {
            let (na, nb) = (inputs[0].shape()[1], inputs[1].shape()[1]);
            let r = inputs[0].shape()[0];
            let n = na + nb;
            if needs[0] {
                let mut da = Tensor::zeros(&[r, na]);
                for i in 0..r {
                    da.data_mut()[i * na..(i + 1) * na]
                        .copy_from_slice(&gout.data()[i * n..i * n + na]);
                }
                grads[0] = Some(da);
            }
            if needs[1] {
                let mut db = Tensor::zeros(&[r, nb]);
                for i in 0..r {
                    db.data_mut()[i * nb..(i + 1) * nb]
                        .copy_from_slice(&gout.data()[i * n + na..(i + 1) * n]);
                }
                grads[1] = Some(db);
            }
        }
        Op::SliceCols { start, end } => {
            if needs[0] {
                let (r, n) = (inputs[0].shape()[0], inputs[0].shape()[1]);
                let width = end - start;
                let mut dx = Tensor::zeros(&[r, n]);
                for i in 0..r {
                    dx.data_mut()[i * n + start..i * n + end]
                        .copy_from_slice(&gout.data()[i * width..(i + 1) * width]);
                }
                grads[0] = Some(dx);
            }
        }
        Op::GatherRows { idx } => {
            if needs[0] {
                let (r, n) = (inputs[0].shape()[0], inputs[0].shape()[1]);
                let mut dx = Tensor::zeros(&[r, n]);
                for (row, &src) in idx.iter().enumerate() {
                    kernels::axpy(
                        T::one(),
                        &gout.data()[row * n..(row + 1) * n],
                        &mut dx.data_mut()[src * n..(src + 1) * n],
                    );
                }
                grads[0] = Some(dx);
            }
        }
        Op::ScatterRows { idx } => {
            let n = value.shape()[1];
            for (part, list) in idx.iter().enumerate() {
                if !needs[part] {
                    continue;
                }
                let mut dp = Tensor::zeros(&[list.len(), n]);
                for (row, &dst) in list.iter().enumerate() {
                    dp.data_mut()[row * n..(row + 1) * n]
                        .copy_from_slice(&gout.data()[dst * n..(dst + 1) * n]);
                }
                grads[part] = Some(dp);
            }
        }
    }
}
