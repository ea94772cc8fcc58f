//! Tape-based reverse-mode automatic differentiation over dense f32 tensors.
//!
//! A [`Tape`] records every forward op as a node; [`Tape::backward`] walks the
//! recorded nodes in reverse and accumulates gradients into every node whose
//! subtree contains a `requires_grad` leaf. Subgraphs without such a leaf are
//! skipped entirely, so frozen modules cost nothing in the backward pass.
//!
//! The tape is rebuilt on every forward pass and must not be shared across
//! threads; parameter tensors themselves are cheaply shareable (`Arc` data).

use super::linalg;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// c = a[m,k] * b[k,n]
    Matmul(NodeId, NodeId),
    /// c = a[m,k] * b[n,k]^T
    MatmulNt(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// [r,c] + [1,c] row-broadcast (bias add)
    AddRows(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// scale * x + shift; only the scale matters to the backward pass
    Affine(NodeId, f32),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    /// Row-wise masked softmax over the last axis; masked entries are exactly 0.
    Softmax(NodeId, Option<Vec<bool>>),
    Concat(Vec<NodeId>, usize),
    /// Row `i` of a 2-D tensor as `[1, n]`.
    Row(NodeId, usize),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// input [IC,H,W], weight [OC,IC,K,K], bias [OC]
    Conv2d { input: NodeId, weight: NodeId, bias: NodeId, stride: usize, pad: usize },
    /// [C,H,W] -> [1,C]
    GlobalAvgPool(NodeId),
    /// same data, new shape
    Reshape(NodeId),
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&[f32]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient of `id`, or zeros when the node was unreachable from the loss.
    pub fn take_or_zeros(&mut self, id: NodeId, numel: usize) -> Vec<f32> {
        self.grads[id.0].take().unwrap_or_else(|| vec![0.0; numel])
    }

    /// Remove and return the gradient of `id`, if it received one.
    pub fn take(&mut self, id: NodeId) -> Option<Vec<f32>> {
        self.grads[id.0].take()
    }
}

fn debug_check_finite(op: &'static str, data: &[f32]) {
    debug_assert!(
        data.iter().all(|x| x.is_finite()),
        "non-finite value produced by {op}"
    );
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, requires_grad, op });
        id
    }

    /// Record a leaf; gradient tracking follows `tensor.requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor) -> NodeId {
        let rg = tensor.requires_grad;
        self.push(tensor, rg, Op::Leaf)
    }

    /// Leaf that never tracks gradients.
    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.push(tensor, false, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                detail: format!("{sa:?} x {sb:?}"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = linalg::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        debug_check_finite("matmul", &out);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, rg, Op::Matmul(a, b)))
    }

    /// `a[m,k] * b[n,k]^T -> [m,n]`
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[1] {
            return Err(Error::Dimension {
                op: "matmul_nt",
                detail: format!("{sa:?} x {sb:?}^T"),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[0]);
        let out = linalg::matmul_nt(self.value(a).data(), self.value(b).data(), m, k, n);
        debug_check_finite("matmul_nt", &out);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, rg, Op::MatmulNt(a, b)))
    }

    fn broadcast_shapes(
        op: &'static str,
        sa: &[usize],
        na: usize,
        sb: &[usize],
        nb: usize,
    ) -> Result<Vec<usize>> {
        if sa == sb {
            Ok(sa.to_vec())
        } else if nb == 1 {
            Ok(sa.to_vec())
        } else if na == 1 {
            Ok(sb.to_vec())
        } else {
            Err(Error::Dimension { op, detail: format!("{sa:?} vs {sb:?}") })
        }
    }

    fn binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f32, f32) -> f32,
        op: Op,
    ) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let shape = Self::broadcast_shapes(op_name, va.shape(), va.numel(), vb.shape(), vb.numel())?;
        let (da, db) = (va.data(), vb.data());
        let out: Vec<f32> = if da.len() == db.len() {
            da.iter().zip(db.iter()).map(|(&x, &y)| f(x, y)).collect()
        } else if db.len() == 1 {
            da.iter().map(|&x| f(x, db[0])).collect()
        } else {
            db.iter().map(|&y| f(da[0], y)).collect()
        };
        debug_check_finite(op_name, &out);
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(Tensor::new(shape, out)?, rg, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        // bias case: [r, c] + [1, c] broadcasts the row
        let (sa, sb) = (self.value(a).shape().to_vec(), self.value(b).shape().to_vec());
        if sa.len() == 2 && sb.len() == 2 && sb[0] == 1 && sa[1] == sb[1] && sa[0] > 1 {
            let (r, c) = (sa[0], sa[1]);
            let da = self.value(a).data();
            let db = self.value(b).data();
            let mut out = Vec::with_capacity(r * c);
            for row in 0..r {
                for col in 0..c {
                    out.push(da[row * c + col] + db[col]);
                }
            }
            debug_check_finite("add", &out);
            let rg = self.requires_grad(a) || self.requires_grad(b);
            return Ok(self.push(Tensor::new(sa, out)?, rg, Op::AddRows(a, b)));
        }
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f32) -> NodeId {
        self.affine(a, c, 0.0)
    }

    pub fn affine(&mut self, a: NodeId, scale: f32, shift: f32) -> NodeId {
        let va = self.value(a);
        let out: Vec<f32> = va.data().iter().map(|&x| scale * x + shift).collect();
        debug_check_finite("affine", &out);
        let shape = va.shape().to_vec();
        let rg = self.requires_grad(a);
        self.push(
            Tensor::new(shape, out).expect("affine preserves shape"),
            rg,
            Op::Affine(a, scale),
        )
    }

    fn unary(&mut self, name: &'static str, a: NodeId, f: impl Fn(f32) -> f32, op: Op) -> NodeId {
        let va = self.value(a);
        let out: Vec<f32> = va.data().iter().map(|&x| f(x)).collect();
        debug_check_finite(name, &out);
        let shape = va.shape().to_vec();
        let rg = self.requires_grad(a);
        self.push(Tensor::new(shape, out).expect("unary preserves shape"), rg, op)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary("tanh", a, f32::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary("sigmoid", a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary("exp", a, f32::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.unary("ln", a, f32::ln, Op::Ln(a))
    }

    /// Row-wise softmax over the last axis. `mask` (same layout as the input)
    /// excludes entries: they come out exactly 0 and take no probability mass.
    pub fn softmax(&mut self, a: NodeId, mask: Option<&[bool]>) -> Result<NodeId> {
        let va = self.value(a);
        let shape = va.shape().to_vec();
        let cols = *shape.last().unwrap();
        let rows = va.numel() / cols;
        if let Some(m) = mask {
            if m.len() != va.numel() {
                return Err(Error::Dimension {
                    op: "softmax",
                    detail: format!("mask length {} != numel {}", m.len(), va.numel()),
                });
            }
        }
        let data = va.data();
        let mut out = vec![0.0f32; data.len()];
        for r in 0..rows {
            let base = r * cols;
            let active = |j: usize| mask.map_or(true, |m| m[base + j]);
            let mut max = f32::NEG_INFINITY;
            for j in 0..cols {
                if active(j) {
                    max = max.max(data[base + j]);
                }
            }
            if max == f32::NEG_INFINITY {
                return Err(Error::EmptyNeighborhood(format!("softmax row {r} fully masked")));
            }
            let mut sum = 0.0f32;
            for j in 0..cols {
                if active(j) {
                    let e = (data[base + j] - max).exp();
                    out[base + j] = e;
                    sum += e;
                }
            }
            for j in 0..cols {
                if active(j) {
                    out[base + j] /= sum;
                }
            }
        }
        debug_check_finite("softmax", &out);
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::new(shape, out)?, rg, Op::Softmax(a, mask.map(|m| m.to_vec()))))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(Error::Usage("concat of zero tensors".into()));
        }
        let first = self.value(inputs[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(Error::Dimension {
                op: "concat",
                detail: format!("axis {axis} out of range for {first:?}"),
            });
        }
        let mut axis_total = 0usize;
        for &id in inputs {
            let s = self.value(id).shape();
            if s.len() != first.len()
                || s.iter().zip(first.iter()).enumerate().any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(Error::Dimension {
                    op: "concat",
                    detail: format!("off-axis mismatch: {s:?} vs {first:?}"),
                });
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut out = vec![0.0f32; shape.iter().product()];
        let row_len = axis_total * inner;
        let mut offset = 0usize;
        for &id in inputs {
            let v = self.value(id);
            let a_len = v.shape()[axis] * inner;
            for o in 0..outer {
                let src = &v.data()[o * a_len..(o + 1) * a_len];
                out[o * row_len + offset..o * row_len + offset + a_len].copy_from_slice(src);
            }
            offset += a_len;
        }
        let rg = inputs.iter().any(|&i| self.requires_grad(i));
        Ok(self.push(Tensor::new(shape, out)?, rg, Op::Concat(inputs.to_vec(), axis)))
    }

    /// Row `i` of a 2-D tensor as a `[1, n]` row vector.
    pub fn row(&mut self, a: NodeId, i: usize) -> Result<NodeId> {
        let va = self.value(a);
        let s = va.shape();
        if s.len() != 2 || i >= s[0] {
            return Err(Error::Dimension {
                op: "row",
                detail: format!("row {i} of {s:?}"),
            });
        }
        let n = s[1];
        let out = va.data()[i * n..(i + 1) * n].to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::new(vec![1, n], out)?, rg, Op::Row(a, i)))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f32 = self.value(a).data().iter().sum();
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(s), rg, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).numel() as f32;
        let s: f32 = self.value(a).data().iter().sum();
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(s / n), rg, Op::MeanAll(a))
    }

    /// 2-D convolution, square kernel, zero padding.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let (si, sw, sb) = (
            self.value(input).shape().to_vec(),
            self.value(weight).shape().to_vec(),
            self.value(bias).shape().to_vec(),
        );
        if si.len() != 3 || sw.len() != 4 || sw[1] != si[0] || sw[2] != sw[3] {
            return Err(Error::Dimension {
                op: "conv2d",
                detail: format!("input {si:?}, weight {sw:?}"),
            });
        }
        let (ic, h, w) = (si[0], si[1], si[2]);
        let (oc, k) = (sw[0], sw[2]);
        if sb != [oc] {
            return Err(Error::Dimension {
                op: "conv2d",
                detail: format!("bias {sb:?} for {oc} output channels"),
            });
        }
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::Dimension {
                op: "conv2d",
                detail: format!("kernel {k} exceeds padded input {h}x{w}"),
            });
        }
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let col = im2col(self.value(input).data(), ic, h, w, k, stride, pad, oh, ow);
        let q = ic * k * k;
        let p = oh * ow;
        let mut out = linalg::matmul(self.value(weight).data(), &col, oc, q, p);
        let bias_data = self.value(bias).data();
        for c in 0..oc {
            let b = bias_data[c];
            for v in &mut out[c * p..(c + 1) * p] {
                *v += b;
            }
        }
        debug_check_finite("conv2d", &out);
        let rg = self.requires_grad(input) || self.requires_grad(weight) || self.requires_grad(bias);
        Ok(self.push(
            Tensor::new(vec![oc, oh, ow], out)?,
            rg,
            Op::Conv2d { input, weight, bias, stride, pad },
        ))
    }

    /// Mean over the spatial dims of `[C,H,W]`, returned as `[1,C]`.
    pub fn global_avg_pool(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let s = va.shape();
        if s.len() != 3 {
            return Err(Error::Dimension {
                op: "global_avg_pool",
                detail: format!("expected [C,H,W], got {s:?}"),
            });
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        let data = va.data();
        let out: Vec<f32> = (0..c)
            .map(|ch| data[ch * hw..(ch + 1) * hw].iter().sum::<f32>() / hw as f32)
            .collect();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::new(vec![1, c], out)?, rg, Op::GlobalAvgPool(a)))
    }

    /// Reinterpret the buffer under a new shape of equal element count.
    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let va = self.value(a);
        let numel: usize = shape.iter().product();
        if numel != va.numel() {
            return Err(Error::Dimension {
                op: "reshape",
                detail: format!("{:?} -> {shape:?}", va.shape()),
            });
        }
        let data = va.data().to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(Tensor::new(shape, data)?, rg, Op::Reshape(a)))
    }

    /// Reverse pass from a scalar loss node.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Usage(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[idx].op.clone();
            self.backprop_node(idx, &g, &op, &mut grads);
            if matches!(op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut Vec<Option<Vec<f32>>>, id: NodeId, update: impl FnOnce(&mut [f32])) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let slot = &mut grads[id.0];
        if slot.is_none() {
            *slot = Some(vec![0.0; self.nodes[id.0].value.numel()]);
        }
        update(slot.as_mut().unwrap());
    }

    #[allow(clippy::too_many_lines)]
    fn backprop_node(&self, idx: usize, g: &[f32], op: &Op, grads: &mut Vec<Option<Vec<f32>>>) {
        match *op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                self.accumulate(grads, a, |da| linalg::matmul_nt_acc(g, vb.data(), m, n, k, da));
                self.accumulate(grads, b, |db| linalg::matmul_tn_acc(va.data(), g, k, m, n, db));
            }
            Op::MatmulNt(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[0]);
                self.accumulate(grads, a, |da| linalg::matmul_acc(g, vb.data(), m, n, k, da));
                self.accumulate(grads, b, |db| linalg::matmul_tn_acc(g, va.data(), n, m, k, db));
            }
            Op::Add(a, b) => {
                self.backprop_linear_side(grads, a, g, 1.0);
                self.backprop_linear_side(grads, b, g, 1.0);
            }
            Op::AddRows(a, b) => {
                self.backprop_linear_side(grads, a, g, 1.0);
                let c = self.nodes[b.0].value.numel();
                self.accumulate(grads, b, |gb| {
                    for (i, gv) in g.iter().enumerate() {
                        gb[i % c] += gv;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.backprop_linear_side(grads, a, g, 1.0);
                self.backprop_linear_side(grads, b, g, -1.0);
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                if da.len() == db.len() {
                    self.accumulate(grads, a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * db[i];
                        }
                    });
                    self.accumulate(grads, b, |gb| {
                        for i in 0..gb.len() {
                            gb[i] += g[i] * da[i];
                        }
                    });
                } else if db.len() == 1 {
                    self.accumulate(grads, a, |ga| {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * db[0];
                        }
                    });
                    self.accumulate(grads, b, |gb| {
                        gb[0] += g.iter().zip(da.iter()).map(|(x, y)| x * y).sum::<f32>();
                    });
                } else {
                    self.accumulate(grads, b, |gb| {
                        for i in 0..gb.len() {
                            gb[i] += g[i] * da[0];
                        }
                    });
                    self.accumulate(grads, a, |ga| {
                        ga[0] += g.iter().zip(db.iter()).map(|(x, y)| x * y).sum::<f32>();
                    });
                }
            }
            Op::Affine(a, scale) => {
                self.accumulate(grads, a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += scale * g[i];
                    }
                });
            }
            Op::Tanh(a) => {
                let y = self.nodes[idx].value.data();
                self.accumulate(grads, a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[idx].value.data();
                self.accumulate(grads, a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Relu(a) => {
                let x = self.nodes[a.0].value.data();
                self.accumulate(grads, a, |ga| {
                    for i in 0..ga.len() {
                        if x[i] > 0.0 {
                            ga[i] += g[i];
                        }
                    }
                });
            }
            Op::Exp(a) => {
                let y = self.nodes[idx].value.data();
                self.accumulate(grads, a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] * y[i];
                    }
                });
            }
            Op::Ln(a) => {
                let x = self.nodes[a.0].value.data();
                self.accumulate(grads, a, |ga| {
                    for i in 0..ga.len() {
                        ga[i] += g[i] / x[i];
                    }
                });
            }
            Op::Softmax(a, ref mask) => {
                let y = self.nodes[idx].value.data();
                let cols = *self.nodes[idx].value.shape().last().unwrap();
                let rows = y.len() / cols;
                self.accumulate(grads, a, |ga| {
                    for r in 0..rows {
                        let base = r * cols;
                        let mut dot = 0.0f32;
                        for j in 0..cols {
                            dot += g[base + j] * y[base + j];
                        }
                        for j in 0..cols {
                            let active = mask.as_ref().map_or(true, |m| m[base + j]);
                            if active {
                                ga[base + j] += y[base + j] * (g[base + j] - dot);
                            }
                        }
                    }
                });
            }
            Op::Concat(ref inputs, axis) => {
                let out_shape = self.nodes[idx].value.shape();
                let outer: usize = out_shape[..axis].iter().product();
                let inner: usize = out_shape[axis + 1..].iter().product();
                let row_len = out_shape[axis] * inner;
                let mut offset = 0usize;
                for &inp in inputs {
                    let a_len = self.nodes[inp.0].value.shape()[axis] * inner;
                    self.accumulate(grads, inp, |ga| {
                        for o in 0..outer {
                            let src = &g[o * row_len + offset..o * row_len + offset + a_len];
                            for (d, s) in ga[o * a_len..(o + 1) * a_len].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    });
                    offset += a_len;
                }
            }
            Op::Row(a, i) => {
                let n = self.nodes[idx].value.numel();
                self.accumulate(grads, a, |ga| {
                    for (d, s) in ga[i * n..(i + 1) * n].iter_mut().zip(g) {
                        *d += s;
                    }
                });
            }
            Op::SumAll(a) => {
                let gv = g[0];
                self.accumulate(grads, a, |ga| {
                    for d in ga.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::MeanAll(a) => {
                let n = self.nodes[a.0].value.numel() as f32;
                let gv = g[0] / n;
                self.accumulate(grads, a, |ga| {
                    for d in ga.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::Conv2d { input, weight, bias, stride, pad } => {
                let vi = &self.nodes[input.0].value;
                let vw = &self.nodes[weight.0].value;
                let (ic, h, w) = (vi.shape()[0], vi.shape()[1], vi.shape()[2]);
                let (oc, k) = (vw.shape()[0], vw.shape()[2]);
                let os = self.nodes[idx].value.shape();
                let (oh, ow) = (os[1], os[2]);
                let p = oh * ow;
                let q = ic * k * k;
                self.accumulate(grads, bias, |gb| {
                    for c in 0..oc {
                        gb[c] += g[c * p..(c + 1) * p].iter().sum::<f32>();
                    }
                });
                let need_w = self.nodes[weight.0].requires_grad;
                let need_x = self.nodes[input.0].requires_grad;
                if need_w || need_x {
                    let col = im2col(vi.data(), ic, h, w, k, stride, pad, oh, ow);
                    if need_w {
                        self.accumulate(grads, weight, |gw| {
                            linalg::matmul_nt_acc(g, &col, oc, p, q, gw);
                        });
                    }
                    if need_x {
                        let dcol = linalg::matmul_tn(vw.data(), g, q, oc, p);
                        self.accumulate(grads, input, |gi| {
                            col2im_acc(&dcol, ic, h, w, k, stride, pad, oh, ow, gi);
                        });
                    }
                }
            }
            Op::Reshape(a) => {
                self.accumulate(grads, a, |ga| {
                    for (d, s) in ga.iter_mut().zip(g) {
                        *d += s;
                    }
                });
            }
            Op::GlobalAvgPool(a) => {
                let s = self.nodes[a.0].value.shape();
                let (c, hw) = (s[0], s[1] * s[2]);
                self.accumulate(grads, a, |ga| {
                    for ch in 0..c {
                        let gv = g[ch] / hw as f32;
                        for d in ga[ch * hw..(ch + 1) * hw].iter_mut() {
                            *d += gv;
                        }
                    }
                });
            }
        }
    }

    fn backprop_linear_side(
        &self,
        grads: &mut Vec<Option<Vec<f32>>>,
        side: NodeId,
        g: &[f32],
        sign: f32,
    ) {
        let n = self.nodes[side.0].value.numel();
        if n == g.len() {
            self.accumulate(grads, side, |ga| {
                for i in 0..n {
                    ga[i] += sign * g[i];
                }
            });
        } else {
            // scalar side of a broadcast: reduce
            self.accumulate(grads, side, |ga| {
                ga[0] += sign * g.iter().sum::<f32>();
            });
        }
    }
}

/// Column-major patch matrix: rows are (ic, ky, kx), columns are output
/// positions. Out-of-bounds taps are zero.
#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &[f32],
    ic: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let p = oh * ow;
    let mut col = vec![0.0f32; ic * k * k * p];
    for c in 0..ic {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * p;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let dst = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            col[dst + ox] = plane[iy * w + ix as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add of a column-major patch-gradient matrix back onto the input.
#[allow(clippy::too_many_arguments)]
fn col2im_acc(
    dcol: &[f32],
    ic: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dinput: &mut [f32],
) {
    let p = oh * ow;
    for c in 0..ic {
        let plane = &mut dinput[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * p;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let iy = iy as usize;
                    let src = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            plane[iy * w + ix as usize] += dcol[src + ox];
                        }
                    }
                }
            }
        }
    }
}
