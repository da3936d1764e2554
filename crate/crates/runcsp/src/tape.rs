//! Reverse-mode differentiation on an append-only tape.
//!
//! The op set is exactly what the recurrent forward pass and the losses
//! need: dense matmul, a few elementwise maps, gather/segment ops for
//! message routing, and batch normalization. Shapes are validated with
//! asserts since mismatches are caller bugs, not runtime conditions.
//! Node construction order is topological by definition, so backward is
//! a single reverse sweep.

use crate::scalar::Scalar;
use crate::tensor::Tensor;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum TapeError {
    #[error("loss node has shape {rows}x{cols}, expected a 1x1 scalar")]
    NonScalarLoss { rows: usize, cols: usize },
}

/// Index of a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Slot of a trainable parameter, matching `Parameters::tensors` order.
pub type ParamSlot = usize;

enum Op<S> {
    Leaf { param: Option<ParamSlot> },
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// scale * x + shift, elementwise with constants.
    Affine { x: NodeId, scale: S, shift: S },
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    SliceCols { x: NodeId, start: usize, end: usize },
    SliceRows { x: NodeId, start: usize, end: usize },
    Sigmoid(NodeId),
    Tanh(NodeId),
    SoftmaxRows(NodeId),
    Log(NodeId),
    ClampMin { x: NodeId, floor: S },
    RowSum(NodeId),
    MeanAll(NodeId),
    SumAll(NodeId),
    SegmentMean { x: NodeId, ids: Arc<Vec<usize>>, segments: usize },
    GatherRows { x: NodeId, ids: Arc<Vec<usize>> },
    /// Broadcast-add a 1xM row to every row of an NxM matrix.
    AddRowBroadcast { x: NodeId, row: NodeId },
    Transpose(NodeId),
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mean: Tensor<S>,
        inv_std: Tensor<S>,
    },
}

struct Node<S> {
    op: Op<S>,
    value: Tensor<S>,
}

/// Gradients keyed by parameter slot.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, slot: ParamSlot) -> Option<&Tensor<S>> {
        self.grads.get(slot).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, slot: ParamSlot) -> Option<Tensor<S>> {
        self.grads.get_mut(slot).and_then(|g| g.take())
    }

    pub fn slots(&self) -> usize {
        self.grads.len()
    }
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    params: Vec<(ParamSlot, NodeId)>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<S>, value: Tensor<S>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; receives no gradient.
    pub fn leaf(&mut self, value: Tensor<S>) -> NodeId {
        self.push(Op::Leaf { param: None }, value)
    }

    /// Trainable input; its gradient lands in the given slot.
    pub fn param(&mut self, slot: ParamSlot, value: Tensor<S>) -> NodeId {
        let id = self.push(Op::Leaf { param: Some(slot) }, value);
        self.params.push((slot, id));
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.value(a).matmul(self.value(b));
        self.push(Op::Matmul(a, b), value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let data = ta.iter().zip(tb.iter()).map(|(&x, &y)| x + y).collect();
        let value = Tensor::from_vec(ta.rows(), ta.cols(), data);
        self.push(Op::Add(a, b), value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let data = ta.iter().zip(tb.iter()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::from_vec(ta.rows(), ta.cols(), data);
        self.push(Op::Mul(a, b), value)
    }

    pub fn affine(&mut self, x: NodeId, scale: S, shift: S) -> NodeId {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(Op::Affine { x, scale, shift }, value)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows(), tb.rows(), "concat_cols row mismatch");
        let mut value = Tensor::zeros(ta.rows(), ta.cols() + tb.cols());
        for r in 0..ta.rows() {
            value.row_mut(r)[..ta.cols()].copy_from_slice(ta.row(r));
            value.row_mut(r)[ta.cols()..].copy_from_slice(tb.row(r));
        }
        self.push(Op::ConcatCols(a, b), value)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(t.data());
        }
        self.push(
            Op::ConcatRows(parts.to_vec()),
            Tensor::from_vec(rows, cols, data),
        )
    }

    pub fn slice_cols(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let t = self.value(x);
        assert!(start < end && end <= t.cols(), "slice_cols out of range");
        let mut value = Tensor::zeros(t.rows(), end - start);
        for r in 0..t.rows() {
            value.row_mut(r).copy_from_slice(&t.row(r)[start..end]);
        }
        self.push(Op::SliceCols { x, start, end }, value)
    }

    pub fn slice_rows(&mut self, x: NodeId, start: usize, end: usize) -> NodeId {
        let t = self.value(x);
        assert!(start < end && end <= t.rows(), "slice_rows out of range");
        let data = t.data()[start * t.cols()..end * t.cols()].to_vec();
        let value = Tensor::from_vec(end - start, t.cols(), data);
        self.push(Op::SliceRows { x, start, end }, value)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| S::one() / (S::one() + (-v).exp()));
        self.push(Op::Sigmoid(x), value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.tanh());
        self.push(Op::Tanh(x), value)
    }

    /// Row-wise softmax with the usual max-shift for stability.
    pub fn softmax_rows(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let mut value = Tensor::zeros(t.rows(), t.cols());
        for r in 0..t.rows() {
            let row = t.row(r);
            let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
            let out = value.row_mut(r);
            let mut sum = S::zero();
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in out.iter_mut() {
                *o = *o / sum;
            }
        }
        self.push(Op::SoftmaxRows(x), value)
    }

    pub fn log(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.ln());
        self.push(Op::Log(x), value)
    }

    /// max(x, floor); gradient is zero at and below the floor.
    pub fn clamp_min(&mut self, x: NodeId, floor: S) -> NodeId {
        let value = self.value(x).map(|v| v.max(floor));
        self.push(Op::ClampMin { x, floor }, value)
    }

    pub fn row_sum(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let mut value = Tensor::zeros(t.rows(), 1);
        for r in 0..t.rows() {
            value.set(r, 0, t.row(r).iter().copied().sum());
        }
        self.push(Op::RowSum(x), value)
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        assert!(!t.is_empty(), "mean of empty tensor");
        let sum: S = t.iter().copied().sum();
        let value = Tensor::scalar(sum / S::from_usize(t.len()).unwrap());
        self.push(Op::MeanAll(x), value)
    }

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let sum: S = self.value(x).iter().copied().sum();
        self.push(Op::SumAll(x), Tensor::scalar(sum))
    }

    /// Mean of the rows assigned to each segment; empty segments yield zero
    /// rows (a variable that receives no messages gets the neutral input).
    pub fn segment_mean(&mut self, x: NodeId, ids: Arc<Vec<usize>>, segments: usize) -> NodeId {
        let t = self.value(x);
        assert_eq!(ids.len(), t.rows(), "segment id per row required");
        let mut value = Tensor::zeros(segments, t.cols());
        let mut counts = vec![0usize; segments];
        for (r, &seg) in ids.iter().enumerate() {
            assert!(seg < segments, "segment id out of range");
            counts[seg] += 1;
            let row = t.row(r);
            let out = value.row_mut(seg);
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o += v;
            }
        }
        for (seg, &count) in counts.iter().enumerate() {
            if count > 1 {
                let inv = S::one() / S::from_usize(count).unwrap();
                for v in value.row_mut(seg) {
                    *v = *v * inv;
                }
            }
        }
        self.push(Op::SegmentMean { x, ids, segments }, value)
    }

    pub fn gather_rows(&mut self, x: NodeId, ids: Arc<Vec<usize>>) -> NodeId {
        let t = self.value(x);
        let mut value = Tensor::zeros(ids.len(), t.cols());
        for (r, &src) in ids.iter().enumerate() {
            value.row_mut(r).copy_from_slice(t.row(src));
        }
        self.push(Op::GatherRows { x, ids }, value)
    }

    pub fn add_row_broadcast(&mut self, x: NodeId, row: NodeId) -> NodeId {
        let (tx, tr) = (self.value(x), self.value(row));
        assert_eq!(tr.rows(), 1, "broadcast row must be 1xM");
        assert_eq!(tx.cols(), tr.cols(), "broadcast width mismatch");
        let mut value = tx.clone();
        for r in 0..value.rows() {
            for (o, &b) in value.row_mut(r).iter_mut().zip(tr.row(0).iter()) {
                *o += b;
            }
        }
        self.push(Op::AddRowBroadcast { x, row }, value)
    }

    pub fn transpose(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).transpose();
        self.push(Op::Transpose(x), value)
    }

    /// Normalize each column to zero mean / unit variance over the rows using
    /// this batch's statistics, then scale by gamma and shift by beta.
    pub fn batch_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, epsilon: S) -> NodeId {
        let t = self.value(x);
        let (tg, tb) = (self.value(gamma), self.value(beta));
        assert_eq!(tg.shape(), (1, t.cols()), "gamma must be 1xM");
        assert_eq!(tb.shape(), (1, t.cols()), "beta must be 1xM");
        assert!(t.rows() > 0, "batch_norm over empty batch");
        let n = S::from_usize(t.rows()).unwrap();

        let mut mean: Tensor<S> = Tensor::zeros(1, t.cols());
        for r in 0..t.rows() {
            for (m, &v) in mean.row_mut(0).iter_mut().zip(t.row(r).iter()) {
                *m += v;
            }
        }
        for m in mean.row_mut(0) {
            *m = *m / n;
        }
        let mut var: Tensor<S> = Tensor::zeros(1, t.cols());
        for r in 0..t.rows() {
            for ((va, &m), &v) in var.row_mut(0).iter_mut().zip(mean.row(0)).zip(t.row(r)) {
                let diff = v - m;
                *va += diff * diff;
            }
        }
        let mut inv_std: Tensor<S> = Tensor::zeros(1, t.cols());
        for (o, &va) in inv_std.row_mut(0).iter_mut().zip(var.row(0).iter()) {
            *o = S::one() / (va / n + epsilon).sqrt();
        }

        let mut value = Tensor::zeros(t.rows(), t.cols());
        for r in 0..t.rows() {
            let src = t.row(r);
            let dst = value.row_mut(r);
            for c in 0..src.len() {
                let xhat = (src[c] - mean.get(0, c)) * inv_std.get(0, c);
                dst[c] = tg.get(0, c) * xhat + tb.get(0, c);
            }
        }
        self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            },
            value,
        )
    }

    /// Accumulate d(loss)/d(parameter) for every registered parameter.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<S>, TapeError> {
        let loss_value = self.value(loss);
        if loss_value.shape() != (1, 1) {
            return Err(TapeError::NonScalarLoss {
                rows: loss_value.rows(),
                cols: loss_value.cols(),
            });
        }

        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(S::one()));

        for id in (0..=loss.0).rev() {
            let Some(grad) = grads[id].take() else {
                continue;
            };
            self.propagate(id, grad, &mut grads);
        }

        let slots = self.params.iter().map(|&(s, _)| s).max().map_or(0, |m| m + 1);
        let mut out: Vec<Option<Tensor<S>>> = (0..slots).map(|_| None).collect();
        // The Leaf arm of propagate parks parameter gradients back in `grads`.
        for &(slot, node) in &self.params {
            if let Some(g) = grads[node.0].take() {
                match &mut out[slot] {
                    Some(existing) => existing.add_assign_scaled(&g, S::one()),
                    slot_grad => *slot_grad = Some(g),
                }
            }
        }
        Ok(Gradients { grads: out })
    }

    fn propagate(&self, id: usize, grad: Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let accum = |grads: &mut [Option<Tensor<S>>], target: NodeId, g: Tensor<S>| {
            match &mut grads[target.0] {
                Some(existing) => existing.add_assign_scaled(&g, S::one()),
                slot => *slot = Some(g),
            }
        };

        match &self.nodes[id].op {
            Op::Leaf { param } => {
                // Parameter leaves keep their gradient for collection; plain
                // constants drop it.
                if param.is_some() {
                    grads[id] = Some(grad);
                }
            }
            Op::Matmul(a, b) => {
                let da = grad.matmul_transpose(self.value(*b));
                let tb = {
                    // dB = A^T @ G, computed without materializing A^T.
                    let ta = self.value(*a);
                    let mut db = Tensor::zeros(ta.cols(), grad.cols());
                    unsafe {
                        S::gemm(
                            ta.cols(),
                            ta.rows(),
                            grad.cols(),
                            S::one(),
                            ta.data().as_ptr(),
                            1,
                            ta.cols() as isize,
                            grad.data().as_ptr(),
                            grad.cols() as isize,
                            1,
                            S::zero(),
                            db.data_mut().as_mut_ptr(),
                            grad.cols() as isize,
                            1,
                        );
                    }
                    db
                };
                accum(grads, *a, da);
                accum(grads, *b, tb);
            }
            Op::Add(a, b) => {
                accum(grads, *a, grad.clone());
                accum(grads, *b, grad);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let da = Tensor::from_vec(
                    grad.rows(),
                    grad.cols(),
                    grad.iter().zip(tb.iter()).map(|(&g, &v)| g * v).collect(),
                );
                let db = Tensor::from_vec(
                    grad.rows(),
                    grad.cols(),
                    grad.iter().zip(ta.iter()).map(|(&g, &v)| g * v).collect(),
                );
                accum(grads, *a, da);
                accum(grads, *b, db);
            }
            Op::Affine { x, scale, .. } => {
                let dx = grad.map(|g| g * *scale);
                accum(grads, *x, dx);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let mut da = Tensor::zeros(grad.rows(), ca);
                let mut db = Tensor::zeros(grad.rows(), cb);
                for r in 0..grad.rows() {
                    da.row_mut(r).copy_from_slice(&grad.row(r)[..ca]);
                    db.row_mut(r).copy_from_slice(&grad.row(r)[ca..]);
                }
                accum(grads, *a, da);
                accum(grads, *b, db);
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    let data = grad.data()[start * grad.cols()..(start + rows) * grad.cols()].to_vec();
                    accum(grads, p, Tensor::from_vec(rows, grad.cols(), data));
                    start += rows;
                }
            }
            Op::SliceCols { x, start, end } => {
                let t = self.value(*x);
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for r in 0..grad.rows() {
                    dx.row_mut(r)[*start..*end].copy_from_slice(grad.row(r));
                }
                accum(grads, *x, dx);
            }
            Op::SliceRows { x, start, end } => {
                let t = self.value(*x);
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for (i, r) in (*start..*end).enumerate() {
                    dx.row_mut(r).copy_from_slice(grad.row(i));
                }
                accum(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[id].value;
                let dx = Tensor::from_vec(
                    grad.rows(),
                    grad.cols(),
                    grad.iter()
                        .zip(y.iter())
                        .map(|(&g, &s)| g * s * (S::one() - s))
                        .collect(),
                );
                accum(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let y = &self.nodes[id].value;
                let dx = Tensor::from_vec(
                    grad.rows(),
                    grad.cols(),
                    grad.iter()
                        .zip(y.iter())
                        .map(|(&g, &t)| g * (S::one() - t * t))
                        .collect(),
                );
                accum(grads, *x, dx);
            }
            Op::SoftmaxRows(x) => {
                let y = &self.nodes[id].value;
                let mut dx = Tensor::zeros(grad.rows(), grad.cols());
                for r in 0..grad.rows() {
                    let (gr, yr) = (grad.row(r), y.row(r));
                    let dot: S = gr.iter().zip(yr.iter()).map(|(&g, &p)| g * p).sum();
                    for ((o, &g), &p) in dx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = p * (g - dot);
                    }
                }
                accum(grads, *x, dx);
            }
            Op::Log(x) => {
                let t = self.value(*x);
                let dx = Tensor::from_vec(
                    grad.rows(),
                    grad.cols(),
                    grad.iter().zip(t.iter()).map(|(&g, &v)| g / v).collect(),
                );
                accum(grads, *x, dx);
            }
            Op::ClampMin { x, floor } => {
                let t = self.value(*x);
                let dx = Tensor::from_vec(
                    grad.rows(),
                    grad.cols(),
                    grad.iter()
                        .zip(t.iter())
                        .map(|(&g, &v)| if v > *floor { g } else { S::zero() })
                        .collect(),
                );
                accum(grads, *x, dx);
            }
            Op::RowSum(x) => {
                let t = self.value(*x);
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for r in 0..t.rows() {
                    let g = grad.get(r, 0);
                    for o in dx.row_mut(r) {
                        *o = g;
                    }
                }
                accum(grads, *x, dx);
            }
            Op::MeanAll(x) => {
                let t = self.value(*x);
                let g = grad.item() / S::from_usize(t.len()).unwrap();
                accum(grads, *x, Tensor::full(t.rows(), t.cols(), g));
            }
            Op::SumAll(x) => {
                let t = self.value(*x);
                accum(grads, *x, Tensor::full(t.rows(), t.cols(), grad.item()));
            }
            Op::SegmentMean { x, ids, segments } => {
                let t = self.value(*x);
                let mut counts = vec![0usize; *segments];
                for &seg in ids.iter() {
                    counts[seg] += 1;
                }
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for (r, &seg) in ids.iter().enumerate() {
                    let inv = S::one() / S::from_usize(counts[seg]).unwrap();
                    let src = grad.row(seg);
                    for (o, &g) in dx.row_mut(r).iter_mut().zip(src) {
                        *o = g * inv;
                    }
                }
                accum(grads, *x, dx);
            }
            Op::GatherRows { x, ids } => {
                let t = self.value(*x);
                let mut dx = Tensor::zeros(t.rows(), t.cols());
                for (r, &src) in ids.iter().enumerate() {
                    let g = grad.row(r);
                    for (o, &v) in dx.row_mut(src).iter_mut().zip(g) {
                        *o += v;
                    }
                }
                accum(grads, *x, dx);
            }
            Op::AddRowBroadcast { x, row } => {
                let mut drow = Tensor::zeros(1, grad.cols());
                for r in 0..grad.rows() {
                    for (o, &g) in drow.row_mut(0).iter_mut().zip(grad.row(r)) {
                        *o += g;
                    }
                }
                accum(grads, *row, drow);
                accum(grads, *x, grad);
            }
            Op::Transpose(x) => {
                accum(grads, *x, grad.transpose());
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
            } => {
                let t = self.value(*x);
                let tg = self.value(*gamma);
                let (rows, cols) = t.shape();
                let n = S::from_usize(rows).unwrap();

                let mut dgamma = Tensor::zeros(1, cols);
                let mut dbeta = Tensor::zeros(1, cols);
                // Column sums of dxhat and dxhat * xhat, needed by the input
                // gradient of the normalization.
                let mut sum_dxhat = vec![S::zero(); cols];
                let mut sum_dxhat_xhat = vec![S::zero(); cols];
                for r in 0..rows {
                    for c in 0..cols {
                        let g = grad.get(r, c);
                        let xhat = (t.get(r, c) - mean.get(0, c)) * inv_std.get(0, c);
                        dbeta.row_mut(0)[c] += g;
                        dgamma.row_mut(0)[c] += g * xhat;
                        let dxhat = g * tg.get(0, c);
                        sum_dxhat[c] += dxhat;
                        sum_dxhat_xhat[c] += dxhat * xhat;
                    }
                }
                let mut dx = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let xhat = (t.get(r, c) - mean.get(0, c)) * inv_std.get(0, c);
                        let dxhat = grad.get(r, c) * tg.get(0, c);
                        let v = (dxhat * n - sum_dxhat[c] - xhat * sum_dxhat_xhat[c])
                            * inv_std.get(0, c)
                            / n;
                        dx.set(r, c, v);
                    }
                }
                accum(grads, *x, dx);
                accum(grads, *gamma, dgamma);
                accum(grads, *beta, dbeta);
            }
        }
    }
}

/// Finite-difference check of tape gradients.
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub entries: usize,
    pub worst_param: usize,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Relative error denominators are floored so that finite-difference noise on
/// near-zero gradient entries does not dominate the report.
const FD_DENOM_FLOOR: f64 = 1e-4;

/// Compare tape gradients of `build` against central finite differences.
///
/// `build` must be deterministic in the parameter values: it is re-run twice
/// per parameter entry with perturbed inputs.
pub fn grad_check<S: Scalar>(
    params: &[Tensor<S>],
    step: S,
    build: impl Fn(&mut Tape<S>, &[NodeId]) -> NodeId,
) -> Result<GradCheckReport, TapeError> {
    let eval = |tensors: &[Tensor<S>]| -> (Tape<S>, NodeId) {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = tensors
            .iter()
            .enumerate()
            .map(|(slot, t)| tape.param(slot, t.clone()))
            .collect();
        let loss = build(&mut tape, &ids);
        (tape, loss)
    };

    let (tape, loss) = eval(params);
    let grads = tape.backward(loss)?;

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        entries: 0,
        worst_param: 0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    let mut work: Vec<Tensor<S>> = params.to_vec();
    for (slot, base) in params.iter().enumerate() {
        for index in 0..base.len() {
            let original = base.data()[index];
            work[slot].data_mut()[index] = original + step;
            let (tape_plus, loss_plus) = eval(&work);
            let plus = tape_plus.value(loss_plus).item();
            work[slot].data_mut()[index] = original - step;
            let (tape_minus, loss_minus) = eval(&work);
            let minus = tape_minus.value(loss_minus).item();
            work[slot].data_mut()[index] = original;

            let numeric = (plus.as_f64() - minus.as_f64()) / (2.0 * step.as_f64());
            let analytic = grads
                .get(slot)
                .map_or(0.0, |g| g.data()[index].as_f64());
            let denom = analytic.abs().max(numeric.abs()).max(FD_DENOM_FLOOR);
            let rel = (analytic - numeric).abs() / denom;
            report.entries += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = slot;
                report.worst_index = index;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn softmax_uniform_on_zero_logits() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_vec(1, 3, vec![0.0, 0.0, 0.0]));
        let y = tape.softmax_rows(x);
        for &v in tape.value(y).iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn segment_mean_forward() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(3, 1, vec![2.0, 4.0, 6.0]));
        let y = tape.segment_mean(x, Arc::new(vec![0, 0, 1]), 2);
        assert_eq!(tape.value(y).data(), &[3.0, 6.0]);
    }

    #[test]
    fn segment_mean_empty_segment_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let y = tape.segment_mean(x, Arc::new(vec![2, 2]), 3);
        assert_eq!(tape.value(y).row(0), &[0.0, 0.0]);
        assert_eq!(tape.value(y).row(1), &[0.0, 0.0]);
        assert_eq!(tape.value(y).row(2), &[2.0, 3.0]);
    }

    #[test]
    fn segment_mean_backward_splits_equally() {
        let mut tape = Tape::new();
        let x = tape.param(0, Tensor::from_vec(3, 1, vec![2.0, 4.0, 6.0]));
        let seg = tape.segment_mean(x, Arc::new(vec![0, 0, 1]), 2);
        let loss = tape.sum_all(seg);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(0).unwrap().data(), &[0.5, 0.5, 1.0]);
    }

    #[test]
    fn batch_norm_constant_column_is_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(4, 1, vec![3.0; 4]));
        let gamma = tape.leaf(Tensor::from_vec(1, 1, vec![1.0]));
        let beta = tape.leaf(Tensor::from_vec(1, 1, vec![0.0]));
        let y = tape.batch_norm(x, gamma, beta, 1e-5);
        for &v in tape.value(y).iter() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn batch_norm_standardizes_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..200).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let x = tape.leaf(Tensor::from_vec(100, 2, data));
        let gamma = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 1.0]));
        let beta = tape.leaf(Tensor::from_vec(1, 2, vec![0.0, 0.0]));
        let y = tape.batch_norm(x, gamma, beta, 1e-5);
        let out = tape.value(y);
        for c in 0..2 {
            let mean: f64 = (0..100).map(|r| out.get(r, c)).sum::<f64>() / 100.0;
            let var: f64 = (0..100).map(|r| (out.get(r, c) - mean).powi(2)).sum::<f64>() / 100.0;
            assert!(mean.abs() < 1e-12);
            assert!(var > 1.0 - 1e-3 && var <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn linear_mean_gradient_is_input_scaled() {
        // loss = mean_all(W @ x) with fixed x: dW = outer-product structure / size.
        let mut tape = Tape::new();
        let w = tape.param(0, Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let x = tape.leaf(Tensor::from_vec(2, 1, vec![5.0, 7.0]));
        let y = tape.matmul(w, x);
        let loss = tape.mean_all(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(0).unwrap().data(), &[2.5, 3.5, 2.5, 3.5]);
    }

    #[test]
    fn unused_parameter_gets_no_gradient() {
        let mut tape = Tape::new();
        let used = tape.param(0, Tensor::scalar(2.0));
        let _unused = tape.param(1, Tensor::scalar(5.0));
        let loss = tape.mul(used, used);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(0).is_some());
        assert!(grads.get(1).is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(0, Tensor::from_vec(2, 1, vec![1.0, 2.0]));
        assert!(matches!(
            tape.backward(x),
            Err(TapeError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn log_softmax_select_gradient_identity() {
        // d/dlogits of -log softmax(logits)[target] = softmax - onehot.
        let mut tape = Tape::<f64>::new();
        let logits = tape.param(0, Tensor::from_vec(1, 3, vec![0.3, -0.6, 1.1]));
        let soft = tape.softmax_rows(logits);
        let picked = tape.slice_cols(soft, 1, 2);
        let logp = tape.log(picked);
        let sum = tape.sum_all(logp);
        let loss = tape.affine(sum, -1.0, 0.0);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(0).unwrap();
        let p = tape.value(soft);
        let expected = [p.get(0, 0), p.get(0, 1) - 1.0, p.get(0, 2)];
        for (a, e) in g.data().iter().zip(expected.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_scalar_grad_check_is_exact() {
        let params = vec![Tensor::scalar(0.37)];
        let report = grad_check(&params, 1e-4, |tape, ids| tape.sum_all(ids[0])).unwrap();
        assert!(report.max_rel_err < 1e-9, "err {}", report.max_rel_err);
    }

    #[test]
    fn composite_ops_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let params = vec![
            random_tensor(&mut rng, 4, 3),
            random_tensor(&mut rng, 3, 5),
            random_tensor(&mut rng, 1, 5),
            random_tensor(&mut rng, 1, 5),
        ];
        let gather = Arc::new(vec![0usize, 2, 1, 2, 3, 0]);
        let seg = Arc::new(vec![0usize, 1, 1, 0, 2, 2]);
        let report = grad_check(&params, 1e-4, move |tape, ids| {
            let picked = tape.gather_rows(ids[0], Arc::clone(&gather));
            let mixed = tape.matmul(picked, ids[1]);
            let normed = tape.batch_norm(mixed, ids[2], ids[3], 1e-5);
            let squashed = tape.tanh(normed);
            let gated = tape.sigmoid(squashed);
            let pooled = tape.segment_mean(gated, Arc::clone(&seg), 3);
            let soft = tape.softmax_rows(pooled);
            let safe = tape.clamp_min(soft, 1e-8);
            let logs = tape.log(safe);
            let per_row = tape.row_sum(logs);
            let total = tape.mean_all(per_row);
            tape.affine(total, -1.0, 0.0)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn concat_and_slice_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = vec![
            random_tensor(&mut rng, 3, 2),
            random_tensor(&mut rng, 3, 2),
            random_tensor(&mut rng, 2, 4),
            random_tensor(&mut rng, 1, 4),
        ];
        let report = grad_check(&params, 1e-4, |tape, ids| {
            let joined = tape.concat_cols(ids[0], ids[1]);
            let sliced = tape.slice_rows(joined, 0, 3);
            let half = tape.slice_cols(sliced, 1, 3);
            let mixed = tape.matmul(half, ids[2]);
            let shifted = tape.add_row_broadcast(mixed, ids[3]);
            let stacked = tape.concat_rows(&[shifted, mixed]);
            let squashed = tape.tanh(stacked);
            tape.mean_all(squashed)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn transpose_and_mul_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = vec![random_tensor(&mut rng, 3, 4), random_tensor(&mut rng, 3, 4)];
        let report = grad_check(&params, 1e-4, |tape, ids| {
            let flipped = tape.transpose(ids[0]);
            let back = tape.transpose(flipped);
            let prod = tape.mul(back, ids[1]);
            let added = tape.add(prod, ids[0]);
            let sums = tape.row_sum(added);
            tape.mean_all(sums)
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "err {}", report.max_rel_err);
    }

    #[test]
    fn clamp_active_region_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(0, Tensor::from_vec(1, 2, vec![0.5, 1e-12]));
        let clamped = tape.clamp_min(x, 1e-8);
        let loss = tape.sum_all(clamped);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(0).unwrap().data(), &[1.0, 0.0]);
    }
}
