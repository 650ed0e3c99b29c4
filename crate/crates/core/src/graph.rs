//! Reverse-mode automatic differentiation over [`Tensor`].
//!
//! A [`Graph`] is a flat tape of nodes in construction order (inputs always
//! precede their consumers, so the tape is already topologically sorted).
//! `backward` walks the tape in reverse and accumulates gradients for every
//! node that requires them. Graphs are cheap throwaway objects: the trainer
//! and the perturbation loop build a fresh one per evaluation.
//!
//! Broadcasting follows the usual right-aligned convention (dimensions of
//! size one stretch); gradients of broadcast operands are reduced back by
//! summation.

use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// y = a * mul + add (scalars); only the multiplier matters in backward
    Affine(NodeId, f64),
    MatMul(NodeId, NodeId),
    TransposeLast2(NodeId),
    /// Swap axes 1 and 2 of a 4-D tensor.
    Transpose12(NodeId),
    Reshape(NodeId),
    /// Gather rows of a 2-D table by flat indices; output shape = prefix + [D].
    GatherRows { table: NodeId, ids: Vec<usize> },
    /// out[b, ...] = a[b, index, ...]
    SelectDim1 { input: NodeId, index: usize },
    SoftmaxLast(NodeId),
    LayerNorm { input: NodeId, gain: NodeId, bias: NodeId },
    L2NormalizeLast(NodeId),
    Tanh(NodeId),
    Gelu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    SumLast(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Σ w · (max(l,0) − l·y + ln(1 + e^{−|l|})), the numerically stable
    /// binary cross-entropy on logits.
    BceWithLogitsSum { logits: NodeId, labels: Tensor, weights: Tensor },
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
    /// Cached per-row statistics for layer norm / l2 normalize backward.
    aux: Vec<f64>,
}

pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients keyed by node id after a backward pass.
pub struct GradStore {
    grads: Vec<Option<Tensor>>,
}

impl GradStore {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads[id.0].take()
    }
}

const LN_EPS: f64 = 1e-12;

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool, aux: Vec<f64>) -> NodeId {
        self.nodes.push(Node { op, value, requires_grad, aux });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Differentiable leaf (parameter or input being optimised).
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true, vec![])
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false, vec![])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Add(a, b), value, rg, vec![])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Sub(a, b), value, rg, vec![])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = broadcast_zip(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Mul(a, b), value, rg, vec![])
    }

    pub fn affine(&mut self, a: NodeId, mul: f64, add: f64) -> NodeId {
        let value = self.value(a).map(|x| x * mul + add);
        let rg = self.needs(a);
        self.push(Op::Affine(a, mul), value, rg, vec![])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.affine(a, c, 0.0)
    }

    /// Batched matrix product. `a` is `[batch.., M, K]`; `b` is either a
    /// plain `[K, N]` weight (broadcast over the batch) or `[batch.., K, N]`
    /// with identical batch dims.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = matmul_value(self.value(a), self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a, b), value, rg, vec![])
    }

    pub fn transpose_last2(&mut self, a: NodeId) -> NodeId {
        let value = transpose_last2(self.value(a));
        let rg = self.needs(a);
        self.push(Op::TransposeLast2(a), value, rg, vec![])
    }

    pub fn transpose12(&mut self, a: NodeId) -> NodeId {
        let value = transpose12(self.value(a));
        let rg = self.needs(a);
        self.push(Op::Transpose12(a), value, rg, vec![])
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> NodeId {
        let value = self.value(a).clone().reshape(shape);
        let rg = self.needs(a);
        self.push(Op::Reshape(a), value, rg, vec![])
    }

    /// Gather rows of a `[V, D]` table. `ids` index the table; the output
    /// has shape `prefix + [D]` with `prefix.product() == ids.len()`.
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize], prefix: &[usize]) -> NodeId {
        let t = self.value(table);
        assert_eq!(t.shape().len(), 2, "gather_rows wants a 2-D table");
        assert_eq!(prefix.iter().product::<usize>(), ids.len());
        let d = t.shape()[1];
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            assert!(id < t.shape()[0], "row index {} out of table", id);
            data.extend_from_slice(&t.data()[id * d..(id + 1) * d]);
        }
        let mut shape = prefix.to_vec();
        shape.push(d);
        let value = Tensor::new(&shape, data);
        let rg = self.needs(table);
        self.push(Op::GatherRows { table, ids: ids.to_vec() }, value, rg, vec![])
    }

    /// Select one position along axis 1: `[B, L, rest..] -> [B, rest..]`.
    pub fn select_dim1(&mut self, a: NodeId, index: usize) -> NodeId {
        let v = self.value(a);
        let shape = v.shape();
        assert!(shape.len() >= 2);
        let (b, l) = (shape[0], shape[1]);
        assert!(index < l);
        let rest: usize = shape[2..].iter().product();
        let mut data = Vec::with_capacity(b * rest);
        for bi in 0..b {
            let start = (bi * l + index) * rest;
            data.extend_from_slice(&v.data()[start..start + rest]);
        }
        let mut out_shape = vec![b];
        out_shape.extend_from_slice(&shape[2..]);
        let value = Tensor::new(&out_shape, data);
        let rg = self.needs(a);
        self.push(Op::SelectDim1 { input: a, index }, value, rg, vec![])
    }

    pub fn softmax_last(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let n = *v.shape().last().expect("softmax on rank-0");
        let mut data = v.data().to_vec();
        for row in data.chunks_mut(n) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            for x in row.iter_mut() {
                *x /= s;
            }
        }
        let value = Tensor::new(v.shape(), data);
        let rg = self.needs(a);
        self.push(Op::SoftmaxLast(a), value, rg, vec![])
    }

    /// Layer normalisation over the last dimension with learned gain/bias.
    pub fn layer_norm(&mut self, input: NodeId, gain: NodeId, bias: NodeId) -> NodeId {
        let x = self.value(input);
        let d = *x.shape().last().expect("layer_norm on rank-0");
        assert_eq!(self.value(gain).shape(), &[d]);
        assert_eq!(self.value(bias).shape(), &[d]);
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let rows = x.numel() / d;
        let mut data = Vec::with_capacity(x.numel());
        // aux: per row [xhat.., inv_std]
        let mut aux = Vec::with_capacity(rows * (d + 1));
        for r in 0..rows {
            let row = &x.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv_std = 1.0 / (var + LN_EPS).sqrt();
            for (i, &v) in row.iter().enumerate() {
                let xhat = (v - mean) * inv_std;
                aux.push(xhat);
                data.push(g[i] * xhat + b[i]);
            }
            aux.push(inv_std);
        }
        let value = Tensor::new(x.shape(), data);
        let rg = self.needs(input) || self.needs(gain) || self.needs(bias);
        self.push(Op::LayerNorm { input, gain, bias }, value, rg, aux)
    }

    /// Rows scaled to unit Euclidean norm over the last dimension.
    pub fn l2_normalize_last(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let d = *v.shape().last().expect("l2_normalize on rank-0");
        let rows = v.numel() / d;
        let mut data = Vec::with_capacity(v.numel());
        let mut aux = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = &v.data()[r * d..(r + 1) * d];
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm > 0.0, "l2_normalize on zero row");
            aux.push(norm);
            data.extend(row.iter().map(|x| x / norm));
        }
        let value = Tensor::new(v.shape(), data);
        let rg = self.needs(a);
        self.push(Op::L2NormalizeLast(a), value, rg, aux)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        let rg = self.needs(a);
        self.push(Op::Tanh(a), value, rg, vec![])
    }

    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(gelu);
        let rg = self.needs(a);
        self.push(Op::Gelu(a), value, rg, vec![])
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(sigmoid);
        let rg = self.needs(a);
        self.push(Op::Sigmoid(a), value, rg, vec![])
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::exp);
        let rg = self.needs(a);
        self.push(Op::Exp(a), value, rg, vec![])
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::ln);
        let rg = self.needs(a);
        self.push(Op::Log(a), value, rg, vec![])
    }

    pub fn sum_last(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let n = *v.shape().last().expect("sum_last on rank-0");
        let out_shape = &v.shape()[..v.shape().len() - 1];
        let data: Vec<f64> = v.data().chunks(n).map(|c| c.iter().sum()).collect();
        let value = Tensor::new(out_shape, data);
        let rg = self.needs(a);
        self.push(Op::SumLast(a), value, rg, vec![])
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.needs(a);
        self.push(Op::SumAll(a), value, rg, vec![])
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let value = Tensor::scalar(v.data().iter().sum::<f64>() / v.numel() as f64);
        let rg = self.needs(a);
        self.push(Op::MeanAll(a), value, rg, vec![])
    }

    /// Masked binary cross-entropy on logits, summed: labels and weights are
    /// fixed tensors with the logits' shape.
    pub fn bce_with_logits_sum(&mut self, logits: NodeId, labels: Tensor, weights: Tensor) -> NodeId {
        let l = self.value(logits);
        assert_eq!(l.shape(), labels.shape());
        assert_eq!(l.shape(), weights.shape());
        let mut total = 0.0;
        for ((&x, &y), &w) in l.data().iter().zip(labels.data()).zip(weights.data()) {
            total += w * (x.max(0.0) - x * y + (-x.abs()).exp().ln_1p());
        }
        let rg = self.needs(logits);
        self.push(Op::BceWithLogitsSum { logits, labels, weights }, Tensor::scalar(total), rg, vec![])
    }

    /// Reverse pass from a scalar node; returns gradients for every node
    /// requiring them.
    pub fn backward(&mut self, loss: NodeId) -> GradStore {
        assert_eq!(self.nodes[loss.0].value.numel(), 1, "backward from non-scalar");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.nodes[loss.0].value.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate_inputs(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        GradStore { grads }
    }

    fn accumulate_inputs(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let add_to = |grads: &mut [Option<Tensor>], id: NodeId, contrib: Tensor| {
            match &mut grads[id.0] {
                Some(acc) => {
                    debug_assert_eq!(acc.shape(), contrib.shape());
                    for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                        *a += c;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    add_to(grads, *a, reduce_to_shape(g, self.value(*a).shape()));
                }
                if self.needs(*b) {
                    add_to(grads, *b, reduce_to_shape(g, self.value(*b).shape()));
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    add_to(grads, *a, reduce_to_shape(g, self.value(*a).shape()));
                }
                if self.needs(*b) {
                    let neg = g.scale(-1.0);
                    add_to(grads, *b, reduce_to_shape(&neg, self.value(*b).shape()));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let gb = broadcast_zip(g, self.value(*b), |x, y| x * y);
                    add_to(grads, *a, reduce_to_shape(&gb, self.value(*a).shape()));
                }
                if self.needs(*b) {
                    let ga = broadcast_zip(g, self.value(*a), |x, y| x * y);
                    add_to(grads, *b, reduce_to_shape(&ga, self.value(*b).shape()));
                }
            }
            Op::Affine(a, mul) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.scale(*mul));
                }
            }
            Op::MatMul(a, b) => {
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.needs(*a) {
                    let bt = transpose_last2(bv);
                    add_to(grads, *a, matmul_value(g, &bt));
                }
                if self.needs(*b) {
                    let at = transpose_last2(av);
                    let gb_full = matmul_value(&at, g); // [batch.., K, N]
                    let gb = if bv.shape().len() == 2 && av.shape().len() > 2 {
                        // weight shared across batch: reduce
                        reduce_leading(&gb_full, bv.shape())
                    } else {
                        gb_full
                    };
                    add_to(grads, *b, gb);
                }
            }
            Op::TransposeLast2(a) => {
                if self.needs(*a) {
                    add_to(grads, *a, transpose_last2(g));
                }
            }
            Op::Transpose12(a) => {
                if self.needs(*a) {
                    add_to(grads, *a, transpose12(g));
                }
            }
            Op::Reshape(a) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.clone().reshape(self.value(*a).shape()));
                }
            }
            Op::GatherRows { table, ids } => {
                if self.needs(*table) {
                    let t = self.value(*table);
                    let d = t.shape()[1];
                    let mut gt = Tensor::zeros(t.shape());
                    for (k, &id) in ids.iter().enumerate() {
                        let src = &g.data()[k * d..(k + 1) * d];
                        let dst = &mut gt.data_mut()[id * d..(id + 1) * d];
                        for (x, s) in dst.iter_mut().zip(src) {
                            *x += s;
                        }
                    }
                    add_to(grads, *table, gt);
                }
            }
            Op::SelectDim1 { input, index } => {
                if self.needs(*input) {
                    let v = self.value(*input);
                    let shape = v.shape();
                    let (b, l) = (shape[0], shape[1]);
                    let rest: usize = shape[2..].iter().product();
                    let mut gi = Tensor::zeros(shape);
                    for bi in 0..b {
                        let dst = (bi * l + index) * rest;
                        let src = bi * rest;
                        gi.data_mut()[dst..dst + rest].copy_from_slice(&g.data()[src..src + rest]);
                    }
                    add_to(grads, *input, gi);
                }
            }
            Op::SoftmaxLast(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].value;
                    let n = *y.shape().last().unwrap();
                    let mut gx = Tensor::zeros(y.shape());
                    for (r, (yrow, grow)) in y.data().chunks(n).zip(g.data().chunks(n)).enumerate() {
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        let out = &mut gx.data_mut()[r * n..(r + 1) * n];
                        for k in 0..n {
                            out[k] = yrow[k] * (grow[k] - dot);
                        }
                    }
                    add_to(grads, *a, gx);
                }
            }
            Op::LayerNorm { input, gain, bias } => {
                let x = self.value(*input);
                let d = *x.shape().last().unwrap();
                let rows = x.numel() / d;
                let aux = &self.nodes[i].aux;
                let gv = self.value(*gain).data();
                if self.needs(*gain) {
                    let mut gg = Tensor::zeros(&[d]);
                    for r in 0..rows {
                        let xhat = &aux[r * (d + 1)..r * (d + 1) + d];
                        let grow = &g.data()[r * d..(r + 1) * d];
                        for k in 0..d {
                            gg.data_mut()[k] += grow[k] * xhat[k];
                        }
                    }
                    add_to(grads, *gain, gg);
                }
                if self.needs(*bias) {
                    let mut gb = Tensor::zeros(&[d]);
                    for r in 0..rows {
                        let grow = &g.data()[r * d..(r + 1) * d];
                        for k in 0..d {
                            gb.data_mut()[k] += grow[k];
                        }
                    }
                    add_to(grads, *bias, gb);
                }
                if self.needs(*input) {
                    let mut gx = Tensor::zeros(x.shape());
                    for r in 0..rows {
                        let xhat = &aux[r * (d + 1)..r * (d + 1) + d];
                        let inv_std = aux[r * (d + 1) + d];
                        let grow = &g.data()[r * d..(r + 1) * d];
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        for k in 0..d {
                            let dxhat = grow[k] * gv[k];
                            sum_dxhat += dxhat;
                            sum_dxhat_xhat += dxhat * xhat[k];
                        }
                        let out = &mut gx.data_mut()[r * d..(r + 1) * d];
                        let dn = d as f64;
                        for k in 0..d {
                            let dxhat = grow[k] * gv[k];
                            out[k] = inv_std / dn * (dn * dxhat - sum_dxhat - xhat[k] * sum_dxhat_xhat);
                        }
                    }
                    add_to(grads, *input, gx);
                }
            }
            Op::L2NormalizeLast(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].value;
                    let d = *y.shape().last().unwrap();
                    let rows = y.numel() / d;
                    let norms = &self.nodes[i].aux;
                    let mut gx = Tensor::zeros(y.shape());
                    for r in 0..rows {
                        let yrow = &y.data()[r * d..(r + 1) * d];
                        let grow = &g.data()[r * d..(r + 1) * d];
                        let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                        let out = &mut gx.data_mut()[r * d..(r + 1) * d];
                        for k in 0..d {
                            out[k] = (grow[k] - yrow[k] * dot) / norms[r];
                        }
                    }
                    add_to(grads, *a, gx);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].value;
                    let gx = broadcast_zip(g, y, |gi, yi| gi * (1.0 - yi * yi));
                    add_to(grads, *a, gx);
                }
            }
            Op::Gelu(a) => {
                if self.needs(*a) {
                    let x = self.value(*a);
                    let gx = broadcast_zip(g, x, |gi, xi| gi * gelu_grad(xi));
                    add_to(grads, *a, gx);
                }
            }
            Op::Sigmoid(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].value;
                    let gx = broadcast_zip(g, y, |gi, yi| gi * yi * (1.0 - yi));
                    add_to(grads, *a, gx);
                }
            }
            Op::Exp(a) => {
                if self.needs(*a) {
                    let y = &self.nodes[i].value;
                    let gx = broadcast_zip(g, y, |gi, yi| gi * yi);
                    add_to(grads, *a, gx);
                }
            }
            Op::Log(a) => {
                if self.needs(*a) {
                    let x = self.value(*a);
                    let gx = broadcast_zip(g, x, |gi, xi| gi / xi);
                    add_to(grads, *a, gx);
                }
            }
            Op::SumLast(a) => {
                if self.needs(*a) {
                    let v = self.value(*a);
                    let n = *v.shape().last().unwrap();
                    let mut gx = Tensor::zeros(v.shape());
                    for (r, chunk) in gx.data_mut().chunks_mut(n).enumerate() {
                        let gi = g.data()[r];
                        for x in chunk {
                            *x = gi;
                        }
                    }
                    add_to(grads, *a, gx);
                }
            }
            Op::SumAll(a) => {
                if self.needs(*a) {
                    add_to(grads, *a, Tensor::full(self.value(*a).shape(), g.item()));
                }
            }
            Op::MeanAll(a) => {
                if self.needs(*a) {
                    let v = self.value(*a);
                    add_to(grads, *a, Tensor::full(v.shape(), g.item() / v.numel() as f64));
                }
            }
            Op::BceWithLogitsSum { logits, labels, weights } => {
                if self.needs(*logits) {
                    let l = self.value(*logits);
                    let gs = g.item();
                    let mut gl = Tensor::zeros(l.shape());
                    for (((o, &x), &y), &w) in gl
                        .data_mut()
                        .iter_mut()
                        .zip(l.data())
                        .zip(labels.data())
                        .zip(weights.data())
                    {
                        *o = gs * w * (sigmoid(x) - y);
                    }
                    add_to(grads, *logits, gl);
                }
            }
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

fn broadcast_shape(a: &[usize], b: &[usize]) -> Vec<usize> {
    let n = a.len().max(b.len());
    let mut out = vec![0; n];
    for i in 0..n {
        let ad = if i < n - a.len() { 1 } else { a[i - (n - a.len())] };
        let bd = if i < n - b.len() { 1 } else { b[i - (n - b.len())] };
        assert!(
            ad == bd || ad == 1 || bd == 1,
            "incompatible broadcast {:?} vs {:?}",
            a,
            b
        );
        out[i] = ad.max(bd);
    }
    out
}

/// Strides into a tensor of `shape` when iterated with `out` indices;
/// stretched dimensions get stride 0.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let mut strides = vec![0usize; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        let s = if shape[i] == 1 { 0 } else { acc };
        strides[offset + i] = s;
        acc *= shape[i];
    }
    strides
}

fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::new(a.shape(), data);
    }
    let out_shape = broadcast_shape(a.shape(), b.shape());
    let sa = broadcast_strides(a.shape(), &out_shape);
    let sb = broadcast_strides(b.shape(), &out_shape);
    let numel: usize = out_shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut idx = vec![0usize; out_shape.len()];
    let (mut off_a, mut off_b) = (0usize, 0usize);
    let ad = a.data();
    let bd = b.data();
    for _ in 0..numel {
        data.push(f(ad[off_a], bd[off_b]));
        // odometer increment
        for dim in (0..out_shape.len()).rev() {
            idx[dim] += 1;
            off_a += sa[dim];
            off_b += sb[dim];
            if idx[dim] < out_shape[dim] {
                break;
            }
            idx[dim] = 0;
            off_a -= sa[dim] * out_shape[dim];
            off_b -= sb[dim] * out_shape[dim];
        }
    }
    Tensor::new(&out_shape, data)
}

/// Sum `g` down to `target` (inverse of broadcasting).
fn reduce_to_shape(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let out_shape = g.shape().to_vec();
    let st = broadcast_strides(target, &out_shape);
    let mut out = Tensor::zeros(target);
    let mut idx = vec![0usize; out_shape.len()];
    let mut off_t = 0usize;
    let od = out.data_mut();
    for &gv in g.data() {
        od[off_t] += gv;
        for dim in (0..out_shape.len()).rev() {
            idx[dim] += 1;
            off_t += st[dim];
            if idx[dim] < out_shape[dim] {
                break;
            }
            idx[dim] = 0;
            off_t -= st[dim] * out_shape[dim];
        }
    }
    out
}

/// Sum leading batch dims of `g` until it matches `target` (2-D weight grad).
fn reduce_leading(g: &Tensor, target: &[usize]) -> Tensor {
    assert!(g.shape().len() >= target.len());
    let tail: usize = target.iter().product();
    let mut out = Tensor::zeros(target);
    for chunk in g.data().chunks(tail) {
        for (o, &c) in out.data_mut().iter_mut().zip(chunk) {
            *o += c;
        }
    }
    out
}

fn matmul_value(a: &Tensor, b: &Tensor) -> Tensor {
    let ash = a.shape();
    let bsh = b.shape();
    assert!(ash.len() >= 2 && bsh.len() >= 2, "matmul wants rank >= 2");
    let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
    let (kb, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
    assert_eq!(k, kb, "matmul inner dims {:?} x {:?}", ash, bsh);
    let batch: usize = ash[..ash.len() - 2].iter().product();
    let b_batched = bsh.len() > 2;
    if b_batched {
        assert_eq!(&ash[..ash.len() - 2], &bsh[..bsh.len() - 2], "matmul batch dims differ");
    }
    let mut out_shape = ash[..ash.len() - 2].to_vec();
    out_shape.push(m);
    out_shape.push(n);
    let mut data = vec![0.0; batch * m * n];
    let ad = a.data();
    let bd = b.data();
    for s in 0..batch {
        let ao = s * m * k;
        let bo = if b_batched { s * k * n } else { 0 };
        let oo = s * m * n;
        for i in 0..m {
            for kk in 0..k {
                let av = ad[ao + i * k + kk];
                if av == 0.0 {
                    continue;
                }
                let brow = &bd[bo + kk * n..bo + (kk + 1) * n];
                let orow = &mut data[oo + i * n..oo + (i + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
    Tensor::new(&out_shape, data)
}

fn transpose_last2(t: &Tensor) -> Tensor {
    let sh = t.shape();
    assert!(sh.len() >= 2);
    let (m, n) = (sh[sh.len() - 2], sh[sh.len() - 1]);
    let batch: usize = sh[..sh.len() - 2].iter().product();
    let mut out_shape = sh.to_vec();
    let l = out_shape.len();
    out_shape.swap(l - 2, l - 1);
    let mut data = vec![0.0; t.numel()];
    let td = t.data();
    for s in 0..batch {
        let o = s * m * n;
        for i in 0..m {
            for j in 0..n {
                data[o + j * m + i] = td[o + i * n + j];
            }
        }
    }
    Tensor::new(&out_shape, data)
}

fn transpose12(t: &Tensor) -> Tensor {
    let sh = t.shape();
    assert_eq!(sh.len(), 4, "transpose12 wants a 4-D tensor");
    let (a, b, c, d) = (sh[0], sh[1], sh[2], sh[3]);
    let mut data = vec![0.0; t.numel()];
    let td = t.data();
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                let src = ((i * b + j) * c + k) * d;
                let dst = ((i * c + k) * b + j) * d;
                data[dst..dst + d].copy_from_slice(&td[src..src + d]);
            }
        }
    }
    Tensor::new(&[a, c, b, d], data)
}
