//! Operation tape and reverse-mode gradients.
//!
//! A [`Tape`] records every executed operation together with its output
//! value. Nodes are appended in execution order, so the tape is topologically
//! sorted by construction and [`Tape::backward`] is a single reverse sweep
//! that visits each node exactly once.

use super::kernels::{axpy, dot};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Forward copy; gradients do not flow past it.
    Detach,
    Dense {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
    },
    Conv2d {
        input: NodeId,
        kernels: NodeId,
        stride: usize,
    },
    LeakyRelu { input: NodeId, slope: f64 },
    SoftmaxCrossEntropy {
        logits: NodeId,
        label: usize,
        probs: Vec<f64>,
    },
    /// y = scale * x + offset, with `offset` constant in backward.
    Affine { input: NodeId, scale: f64 },
    Pick { input: NodeId, index: usize },
    Sum { input: NodeId },
    Add { lhs: NodeId, rhs: NodeId },
    Mul { lhs: NodeId, rhs: NodeId },
    Reshape { input: NodeId },
    /// Mean of scalar nodes (batch loss).
    MeanStack { inputs: Vec<NodeId> },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by one backward sweep, indexed by node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `node`, if the node is reachable from the
    /// backward root.
    pub fn wrt(&self, node: NodeId) -> Option<&Tensor> {
        self.grads[node.0].as_ref()
    }
}

/// Record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Value computed at `node`.
    pub fn value(&self, node: NodeId) -> &Tensor {
        &self.nodes[node.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input or parameter tensor.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Record a gradient barrier: same value, no backward flow.
    pub fn detach(&mut self, input: NodeId) -> NodeId {
        let value = self.value(input).clone();
        self.push(value, Op::Detach)
    }

    /// weight · input + bias, with `weight` of shape `[out, in]`.
    pub fn dense(&mut self, input: NodeId, weight: NodeId, bias: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let w = self.value(weight);
        let b = self.value(bias);
        if w.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "dense weight must be rank 2, got {:?}",
                w.shape()
            )));
        }
        let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
        if x.shape().len() != 1 || x.numel() != in_dim {
            return Err(Error::Dimension(format!(
                "dense input {:?} does not match weight [{out_dim}, {in_dim}]",
                x.shape()
            )));
        }
        if b.shape() != [out_dim] {
            return Err(Error::Dimension(format!(
                "dense bias {:?} does not match out dimension {out_dim}",
                b.shape()
            )));
        }
        let mut out = vec![0.0; out_dim];
        for (o, row) in w.data().chunks_exact(in_dim).enumerate() {
            out[o] = b.data()[o] + dot(row, x.data());
        }
        Ok(self.push(
            Tensor::from_vec(out),
            Op::Dense {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Valid (no-padding) cross-correlation. `input` is `[C, H, W]`,
    /// `kernels` is `[K, C, kh, kw]`, output is `[K, H', W']`.
    pub fn conv2d(&mut self, input: NodeId, kernels: NodeId, stride: usize) -> Result<NodeId> {
        if stride == 0 {
            return Err(Error::InvalidParameter("conv2d stride must be >= 1".into()));
        }
        let x = self.value(input);
        let k = self.value(kernels);
        if x.shape().len() != 3 || k.shape().len() != 4 {
            return Err(Error::Dimension(format!(
                "conv2d wants input [C,H,W] and kernels [K,C,kh,kw], got {:?} and {:?}",
                x.shape(),
                k.shape()
            )));
        }
        let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (k_out, kc, kh, kw) = (k.shape()[0], k.shape()[1], k.shape()[2], k.shape()[3]);
        if kc != c_in {
            return Err(Error::Dimension(format!(
                "conv2d kernel channels {kc} != input channels {c_in}"
            )));
        }
        if kh > h || kw > w {
            return Err(Error::Dimension(format!(
                "conv2d kernel {kh}x{kw} larger than input {h}x{w}"
            )));
        }
        let h_out = (h - kh) / stride + 1;
        let w_out = (w - kw) / stride + 1;
        let mut out = vec![0.0; k_out * h_out * w_out];
        let xd = x.data();
        let kd = k.data();
        if stride == 1 {
            // Row formulation: one axpy over a contiguous output row per
            // (kernel, channel, tap), which vectorizes well.
            for ko in 0..k_out {
                for c in 0..c_in {
                    let k_base = (ko * c_in + c) * kh * kw;
                    for u in 0..kh {
                        for v in 0..kw {
                            let kval = kd[k_base + u * kw + v];
                            for i in 0..h_out {
                                let x_off = c * h * w + (i + u) * w + v;
                                let o_off = (ko * h_out + i) * w_out;
                                axpy(
                                    &mut out[o_off..o_off + w_out],
                                    kval,
                                    &xd[x_off..x_off + w_out],
                                );
                            }
                        }
                    }
                }
            }
        } else {
            for ko in 0..k_out {
                for i in 0..h_out {
                    for j in 0..w_out {
                        let mut acc = 0.0;
                        for c in 0..c_in {
                            let x_base = c * h * w + i * stride * w + j * stride;
                            let k_base = (ko * c_in + c) * kh * kw;
                            for u in 0..kh {
                                acc += dot(
                                    &xd[x_base + u * w..x_base + u * w + kw],
                                    &kd[k_base + u * kw..k_base + (u + 1) * kw],
                                );
                            }
                        }
                        out[(ko * h_out + i) * w_out + j] = acc;
                    }
                }
            }
        }
        Ok(self.push(
            Tensor::new(vec![k_out, h_out, w_out], out)?,
            Op::Conv2d {
                input,
                kernels,
                stride,
            },
        ))
    }

    /// Elementwise max(0, v) + slope * min(0, v), slope in (0, 1).
    pub fn leaky_relu(&mut self, input: NodeId, slope: f64) -> Result<NodeId> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "leaky_relu slope must lie in (0,1), got {slope}"
            )));
        }
        let x = self.value(input);
        let out: Vec<f64> = x
            .data()
            .iter()
            .map(|&v| if v > 0.0 { v } else { slope * v })
            .collect();
        let shape = x.shape().to_vec();
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LeakyRelu { input, slope },
        ))
    }

    /// −log(softmax(logits)[label]), stabilized by max subtraction.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, label: usize) -> Result<NodeId> {
        let z = self.value(logits);
        if z.shape().len() != 1 || z.numel() < 2 {
            return Err(Error::Dimension(format!(
                "softmax_cross_entropy wants a rank-1 tensor of length >= 2, got {:?}",
                z.shape()
            )));
        }
        if label >= z.numel() {
            return Err(Error::Index(format!(
                "label {label} out of range for {} classes",
                z.numel()
            )));
        }
        let zd = z.data();
        let max = zd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = zd.iter().map(|&v| (v - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / denom).collect();
        let loss = denom.ln() + max - zd[label];
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
        ))
    }

    /// scale * x + offset. The offset is a constant: backward passes only
    /// `scale` through, which is exactly the additive-noise channel contract.
    pub fn affine(&mut self, input: NodeId, scale: f64, offset: &[f64]) -> Result<NodeId> {
        let x = self.value(input);
        if offset.len() != x.numel() {
            return Err(Error::Dimension(format!(
                "affine offset length {} != input length {}",
                offset.len(),
                x.numel()
            )));
        }
        let out: Vec<f64> = x
            .data()
            .iter()
            .zip(offset)
            .map(|(&v, &n)| scale * v + n)
            .collect();
        let shape = x.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Affine { input, scale }))
    }

    /// One component of a tensor as a scalar node.
    pub fn pick(&mut self, input: NodeId, index: usize) -> Result<NodeId> {
        let x = self.value(input);
        if index >= x.numel() {
            return Err(Error::Index(format!(
                "pick index {index} out of range for {} entries",
                x.numel()
            )));
        }
        let v = x.data()[index];
        Ok(self.push(Tensor::scalar(v), Op::Pick { input, index }))
    }

    /// Sum of all entries as a scalar node.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let total: f64 = self.value(input).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum { input })
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(Error::Dimension(format!(
                "add shapes differ: {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let out: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let shape = a.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Add { lhs, rhs }))
    }

    pub fn mul(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let (a, b) = (self.value(lhs), self.value(rhs));
        if a.shape() != b.shape() {
            return Err(Error::Dimension(format!(
                "mul shapes differ: {:?} vs {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let out: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let shape = a.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul { lhs, rhs }))
    }

    /// View the same buffer under a new shape.
    pub fn reshape(&mut self, input: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(input).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape { input }))
    }

    /// Mean of scalar nodes; the batch-loss reduction.
    pub fn mean_stack(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(Error::Contract("mean_stack over no nodes".into()));
        }
        let mut acc = 0.0;
        for &id in inputs {
            let v = self.value(id);
            if v.numel() != 1 {
                return Err(Error::Contract(
                    "mean_stack inputs must be scalar nodes".into(),
                ));
            }
            acc += v.item();
        }
        let mean = acc / inputs.len() as f64;
        Ok(self.push(
            Tensor::scalar(mean),
            Op::MeanStack {
                inputs: inputs.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar node. Returns per-node gradients; every
    /// node on a differentiable path from `root` gets an entry.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        if self.value(root).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g_out) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g_out, &mut grads);
            grads[idx] = Some(g_out);
        }
        Ok(Gradients { grads })
    }

    /// Gradient of a scalar `output` with respect to `wrt`.
    ///
    /// Errors if `wrt` is not reachable backward from `output`.
    pub fn grad_of(&self, output: NodeId, wrt: NodeId) -> Result<Tensor> {
        let grads = self.backward(output)?;
        grads.wrt(wrt).cloned().ok_or_else(|| {
            Error::Contract(format!(
                "node {} is not reachable from node {}",
                wrt.0, output.0
            ))
        })
    }

    fn propagate(&self, idx: usize, g_out: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf | Op::Detach => {}
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let x = self.nodes[input.0].value.data();
                let w = &self.nodes[weight.0].value;
                let in_dim = w.shape()[1];
                let go = g_out.data();
                {
                    let gx = ensure(grads, *input, &[in_dim]);
                    for (o, row) in w.data().chunks_exact(in_dim).enumerate() {
                        axpy(gx, go[o], row);
                    }
                }
                {
                    let w_shape = w.shape().to_vec();
                    let gw = ensure(grads, *weight, &w_shape);
                    for (o, grow) in gw.chunks_exact_mut(in_dim).enumerate() {
                        axpy(grow, go[o], x);
                    }
                }
                {
                    let gb = ensure(grads, *bias, &[go.len()]);
                    for (gv, g) in gb.iter_mut().zip(go) {
                        *gv += g;
                    }
                }
            }
            Op::Conv2d {
                input,
                kernels,
                stride,
            } => {
                let x = &self.nodes[input.0].value;
                let k = &self.nodes[kernels.0].value;
                let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (k_out, _, kh, kw) = (
                    k.shape()[0],
                    k.shape()[1],
                    k.shape()[2],
                    k.shape()[3],
                );
                let (h_out, w_out) = (node.value.shape()[1], node.value.shape()[2]);
                let go = g_out.data();
                let xd = x.data();
                let kd = k.data();
                let x_shape = x.shape().to_vec();
                let k_shape = k.shape().to_vec();
                // Two passes keep the borrows of `grads` disjoint.
                {
                    let gx = ensure(grads, *input, &x_shape);
                    if *stride == 1 {
                        for ko in 0..k_out {
                            for c in 0..c_in {
                                let k_base = (ko * c_in + c) * kh * kw;
                                for u in 0..kh {
                                    for v in 0..kw {
                                        let kval = kd[k_base + u * kw + v];
                                        for i in 0..h_out {
                                            let x_off = c * h * w + (i + u) * w + v;
                                            let o_off = (ko * h_out + i) * w_out;
                                            axpy(
                                                &mut gx[x_off..x_off + w_out],
                                                kval,
                                                &go[o_off..o_off + w_out],
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    } else {
                        for ko in 0..k_out {
                            for i in 0..h_out {
                                for j in 0..w_out {
                                    let g = go[(ko * h_out + i) * w_out + j];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    for c in 0..c_in {
                                        let x_base = c * h * w + i * stride * w + j * stride;
                                        let k_base = (ko * c_in + c) * kh * kw;
                                        for u in 0..kh {
                                            axpy(
                                                &mut gx[x_base + u * w..x_base + u * w + kw],
                                                g,
                                                &kd[k_base + u * kw..k_base + (u + 1) * kw],
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                {
                    let gk = ensure(grads, *kernels, &k_shape);
                    if *stride == 1 {
                        for ko in 0..k_out {
                            for c in 0..c_in {
                                let k_base = (ko * c_in + c) * kh * kw;
                                for u in 0..kh {
                                    for v in 0..kw {
                                        let mut acc = 0.0;
                                        for i in 0..h_out {
                                            let x_off = c * h * w + (i + u) * w + v;
                                            let o_off = (ko * h_out + i) * w_out;
                                            acc += dot(
                                                &go[o_off..o_off + w_out],
                                                &xd[x_off..x_off + w_out],
                                            );
                                        }
                                        gk[k_base + u * kw + v] += acc;
                                    }
                                }
                            }
                        }
                    } else {
                        for ko in 0..k_out {
                            for i in 0..h_out {
                                for j in 0..w_out {
                                    let g = go[(ko * h_out + i) * w_out + j];
                                    if g == 0.0 {
                                        continue;
                                    }
                                    for c in 0..c_in {
                                        let x_base = c * h * w + i * stride * w + j * stride;
                                        let k_base = (ko * c_in + c) * kh * kw;
                                        for u in 0..kh {
                                            axpy(
                                                &mut gk[k_base + u * kw..k_base + (u + 1) * kw],
                                                g,
                                                &xd[x_base + u * w..x_base + u * w + kw],
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Op::LeakyRelu { input, slope } => {
                let x = &self.nodes[input.0].value;
                let shape = x.shape().to_vec();
                let xd = x.data();
                let gx = ensure(grads, *input, &shape);
                for ((gv, &g), &v) in gx.iter_mut().zip(g_out.data()).zip(xd) {
                    *gv += g * if v > 0.0 { 1.0 } else { *slope };
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            } => {
                let g = g_out.item();
                let gz = ensure(grads, *logits, &[probs.len()]);
                for (i, (gv, &p)) in gz.iter_mut().zip(probs).enumerate() {
                    let indicator = if i == *label { 1.0 } else { 0.0 };
                    *gv += g * (p - indicator);
                }
            }
            Op::Affine { input, scale } => {
                let shape = self.nodes[input.0].value.shape().to_vec();
                let gx = ensure(grads, *input, &shape);
                for (gv, &g) in gx.iter_mut().zip(g_out.data()) {
                    *gv += g * scale;
                }
            }
            Op::Pick { input, index } => {
                let shape = self.nodes[input.0].value.shape().to_vec();
                let gx = ensure(grads, *input, &shape);
                gx[*index] += g_out.item();
            }
            Op::Sum { input } => {
                let shape = self.nodes[input.0].value.shape().to_vec();
                let g = g_out.item();
                let gx = ensure(grads, *input, &shape);
                for gv in gx.iter_mut() {
                    *gv += g;
                }
            }
            Op::Add { lhs, rhs } => {
                for side in [lhs, rhs] {
                    let shape = self.nodes[side.0].value.shape().to_vec();
                    let gx = ensure(grads, *side, &shape);
                    for (gv, &g) in gx.iter_mut().zip(g_out.data()) {
                        *gv += g;
                    }
                }
            }
            Op::Mul { lhs, rhs } => {
                let a = self.nodes[lhs.0].value.data().to_vec();
                let b = self.nodes[rhs.0].value.data().to_vec();
                let shape = self.nodes[lhs.0].value.shape().to_vec();
                {
                    let gl = ensure(grads, *lhs, &shape);
                    for ((gv, &g), bv) in gl.iter_mut().zip(g_out.data()).zip(&b) {
                        *gv += g * bv;
                    }
                }
                {
                    let gr = ensure(grads, *rhs, &shape);
                    for ((gv, &g), av) in gr.iter_mut().zip(g_out.data()).zip(&a) {
                        *gv += g * av;
                    }
                }
            }
            Op::Reshape { input } => {
                let shape = self.nodes[input.0].value.shape().to_vec();
                let gx = ensure(grads, *input, &shape);
                for (gv, &g) in gx.iter_mut().zip(g_out.data()) {
                    *gv += g;
                }
            }
            Op::MeanStack { inputs } => {
                let g = g_out.item() / inputs.len() as f64;
                for &id in inputs {
                    let gx = ensure(grads, id, &[1]);
                    gx[0] += g;
                }
            }
        }
    }
}

/// Get (allocating zeros if absent) the gradient buffer for `id`.
fn ensure<'a>(grads: &'a mut [Option<Tensor>], id: NodeId, shape: &[usize]) -> &'a mut [f64] {
    grads[id.0]
        .get_or_insert_with(|| Tensor::zeros(shape.to_vec()))
        .data_mut()
}
