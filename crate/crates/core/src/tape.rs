//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its output value and a record of
//! its inputs. Nodes are created in topological order by construction, so
//! [`Tape::backward`] is a single reverse sweep that visits each node once
//! and accumulates gradients into the nodes that require them. Values,
//! gradients, and op records live in parallel vectors; the sweep splits the
//! gradient vector at the current node, so upstream gradients are written
//! without copying any buffers.
//!
//! The op set is exactly what the model needs: dense matmul, 2-D valid
//! convolution with explicit zero padding, sigmoid/ReLU, global average
//! pooling, elementwise max over a list, column concatenation, and a
//! numerically shifted softmax cross-entropy. No broadcasting beyond
//! per-channel bias addition.

use crate::error::TensorError;
use crate::tensor::{chw_offset, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

/// Largest f64 strictly below 1, used to keep sigmoid outputs in (0, 1)
/// even when the exponential underflows.
const ONE_MINUS_EPS: f64 = 1.0 - f64::EPSILON / 2.0;

/// Sigmoid that evaluates the exponential of a non-positive argument only,
/// then clamps into the open unit interval.
pub fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, ONE_MINUS_EPS)
}

/// Softmax with the max-shift. Entries are strictly positive (saturated
/// entries clamp to the smallest positive f64) and sum to 1.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter()
        .map(|&e| (e / sum).max(f64::MIN_POSITIVE))
        .collect()
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add {
        a: TensorId,
        b: TensorId,
    },
    Scale {
        a: TensorId,
        factor: f64,
    },
    Matmul {
        a: TensorId,
        b: TensorId,
    },
    Transpose {
        a: TensorId,
    },
    Reshape {
        a: TensorId,
    },
    Sigmoid {
        a: TensorId,
    },
    Relu {
        a: TensorId,
    },
    Pad2d {
        a: TensorId,
        pad: usize,
    },
    Conv2d {
        x: TensorId,
        kernel: TensorId,
        stride: usize,
    },
    ChannelBias {
        x: TensorId,
        bias: TensorId,
    },
    GlobalAvgPool {
        x: TensorId,
    },
    /// Per-position max over a list; `argmax` records which input won each
    /// position (lowest index on ties) so backward routes there.
    MaxMerge {
        xs: Vec<TensorId>,
        argmax: Vec<usize>,
    },
    ConcatColumns {
        xs: Vec<TensorId>,
    },
    /// `probs` caches softmax(logits) for the backward rule.
    SoftmaxCrossEntropy {
        logits: TensorId,
        target: usize,
        probs: Vec<f64>,
    },
}

/// Append-only record of a differentiable computation.
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    grads: Vec<Option<Vec<f64>>>,
    ops: Vec<Op>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Insert a trainable leaf. Its gradient is available after `backward`.
    pub fn leaf(&mut self, value: Tensor) -> TensorId {
        let numel = value.numel();
        self.push(value, Some(vec![0.0; numel]), Op::Leaf)
    }

    /// Insert a non-trainable leaf (inputs, forced attention weights).
    pub fn constant(&mut self, value: Tensor) -> TensorId {
        self.push(value, None, Op::Leaf)
    }

    pub fn value(&self, id: TensorId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        self.values[id.0].shape()
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        self.values[id.0].data()
    }

    /// Gradient buffer of a node, if it participates in differentiation.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    fn push(&mut self, value: Tensor, grad: Option<Vec<f64>>, op: Op) -> TensorId {
        self.values.push(value);
        self.grads.push(grad);
        self.ops.push(op);
        TensorId(self.values.len() - 1)
    }

    /// Wrap an op output, tracking its gradient iff any input is tracked.
    fn push_op(
        &mut self,
        shape: Vec<usize>,
        data: Vec<f64>,
        inputs: &[TensorId],
        op: Op,
    ) -> TensorId {
        let value = Tensor::new(shape, data).expect("op produced inconsistent shape");
        let tracked = inputs.iter().any(|id| self.grads[id.0].is_some());
        let grad = tracked.then(|| vec![0.0; value.numel()]);
        self.push(value, grad, op)
    }

    // ── Elementwise and structural ops ──────────────────────────────

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        if ta.shape() != tb.shape() {
            return Err(TensorError::DimensionMismatch {
                op: "add",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        Ok(self.push_op(ta.shape().to_vec(), data, &[a, b], Op::Add { a, b }))
    }

    /// Multiply every element by a constant.
    pub fn scale(&mut self, a: TensorId, factor: f64) -> TensorId {
        let ta = &self.values[a.0];
        let data: Vec<f64> = ta.data().iter().map(|x| x * factor).collect();
        self.push_op(ta.shape().to_vec(), data, &[a], Op::Scale { a, factor })
    }

    /// Matrix product of `[m, k]` by `[k, n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (ta, tb) = (&self.values[a.0], &self.values[b.0]);
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::DimensionMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        Ok(self.push_op(vec![m, n], data, &[a, b], Op::Matmul { a, b }))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId, TensorError> {
        let ta = &self.values[a.0];
        let s = ta.shape();
        if s.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "transpose",
                expected: 2,
                shape: s.to_vec(),
            });
        }
        let (m, n) = (s[0], s[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = ta.data()[i * n + j];
            }
        }
        Ok(self.push_op(vec![n, m], data, &[a], Op::Transpose { a }))
    }

    /// Reinterpret the data under a new shape with the same element count.
    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId, TensorError> {
        let ta = &self.values[a.0];
        let numel: usize = shape.iter().product();
        if numel != ta.numel() {
            return Err(TensorError::DimensionMismatch {
                op: "reshape",
                lhs: ta.shape().to_vec(),
                rhs: shape,
            });
        }
        let data = ta.data().to_vec();
        Ok(self.push_op(shape, data, &[a], Op::Reshape { a }))
    }

    /// Elementwise logistic sigmoid; outputs strictly inside (0, 1).
    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let ta = &self.values[a.0];
        let data: Vec<f64> = ta.data().iter().map(|&x| sigmoid_scalar(x)).collect();
        self.push_op(ta.shape().to_vec(), data, &[a], Op::Sigmoid { a })
    }

    /// Elementwise max(0, x).
    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let ta = &self.values[a.0];
        let data: Vec<f64> = ta
            .data()
            .iter()
            .map(|&x| if x > 0.0 { x } else { 0.0 })
            .collect();
        self.push_op(ta.shape().to_vec(), data, &[a], Op::Relu { a })
    }

    // ── Spatial ops ─────────────────────────────────────────────────

    /// Zero-pad the spatial dims of a `[C, H, W]` tensor by `pad` on every side.
    pub fn pad2d(&mut self, a: TensorId, pad: usize) -> Result<TensorId, TensorError> {
        let ta = &self.values[a.0];
        let s = ta.shape();
        if s.len() != 3 {
            return Err(TensorError::RankMismatch {
                op: "pad2d",
                expected: 3,
                shape: s.to_vec(),
            });
        }
        if pad == 0 {
            let data = ta.data().to_vec();
            return Ok(self.push_op(s.to_vec(), data, &[a], Op::Reshape { a }));
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let (hp, wp) = (h + 2 * pad, w + 2 * pad);
        let mut data = vec![0.0; c * hp * wp];
        for ch in 0..c {
            for i in 0..h {
                let src = &ta.data()[chw_offset(w, h, ch, i, 0)..][..w];
                let dst = &mut data[chw_offset(wp, hp, ch, i + pad, pad)..][..w];
                dst.copy_from_slice(src);
            }
        }
        Ok(self.push_op(vec![c, hp, wp], data, &[a], Op::Pad2d { a, pad }))
    }

    /// Valid 2-D convolution of `[C_in, H, W]` with `[C_out, C_in, k, k]`.
    /// No implicit padding; use [`Tape::pad2d`] first if needed.
    pub fn conv2d(
        &mut self,
        x: TensorId,
        kernel: TensorId,
        stride: usize,
    ) -> Result<TensorId, TensorError> {
        let (tx, tk) = (&self.values[x.0], &self.values[kernel.0]);
        let (sx, sk) = (tx.shape(), tk.shape());
        let bad_rank = sx.len() != 3 || sk.len() != 4 || sk[2] != sk[3];
        if bad_rank || sk[1] != sx[0] || stride == 0 {
            return Err(TensorError::DimensionMismatch {
                op: "conv2d",
                lhs: sx.to_vec(),
                rhs: sk.to_vec(),
            });
        }
        let (c_in, h, w) = (sx[0], sx[1], sx[2]);
        let (c_out, k) = (sk[0], sk[2]);
        if k > h || k > w {
            return Err(TensorError::DimensionMismatch {
                op: "conv2d (kernel larger than input)",
                lhs: sx.to_vec(),
                rhs: sk.to_vec(),
            });
        }
        let h_out = (h - k) / stride + 1;
        let w_out = (w - k) / stride + 1;
        let mut data = vec![0.0; c_out * h_out * w_out];
        let (xd, kd) = (tx.data(), tk.data());
        for o in 0..c_out {
            for p in 0..h_out {
                let out_row = &mut data[chw_offset(w_out, h_out, o, p, 0)..][..w_out];
                for i in 0..c_in {
                    for di in 0..k {
                        let x_row = &xd[chw_offset(w, h, i, p * stride + di, 0)..][..w];
                        let k_row = &kd[((o * c_in + i) * k + di) * k..][..k];
                        for (q, out) in out_row.iter_mut().enumerate() {
                            let window = &x_row[q * stride..q * stride + k];
                            let mut acc = 0.0;
                            for (xv, kv) in window.iter().zip(k_row) {
                                acc += xv * kv;
                            }
                            *out += acc;
                        }
                    }
                }
            }
        }
        Ok(self.push_op(
            vec![c_out, h_out, w_out],
            data,
            &[x, kernel],
            Op::Conv2d { x, kernel, stride },
        ))
    }

    /// Add a per-channel bias `[C]` to a `[C, H, W]` map.
    pub fn channel_bias(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId, TensorError> {
        let (tx, tb) = (&self.values[x.0], &self.values[bias.0]);
        let (sx, sb) = (tx.shape(), tb.shape());
        if sx.len() != 3 || sb.len() != 1 || sb[0] != sx[0] {
            return Err(TensorError::DimensionMismatch {
                op: "channel_bias",
                lhs: sx.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let mut data = tx.data().to_vec();
        for ch in 0..c {
            let b = tb.data()[ch];
            for v in &mut data[ch * h * w..(ch + 1) * h * w] {
                *v += b;
            }
        }
        Ok(self.push_op(sx.to_vec(), data, &[x, bias], Op::ChannelBias { x, bias }))
    }

    /// Per-channel mean over all spatial positions: `[C, H, W]` to `[C]`.
    pub fn global_avg_pool(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let tx = &self.values[x.0];
        let s = tx.shape();
        if s.len() != 3 {
            return Err(TensorError::RankMismatch {
                op: "global_avg_pool",
                expected: 3,
                shape: s.to_vec(),
            });
        }
        let (c, h, w) = (s[0], s[1], s[2]);
        let inv = 1.0 / (h * w) as f64;
        let mut data = vec![0.0; c];
        for ch in 0..c {
            let mut acc = 0.0;
            for v in &tx.data()[ch * h * w..(ch + 1) * h * w] {
                acc += *v;
            }
            data[ch] = acc * inv;
        }
        Ok(self.push_op(vec![c], data, &[x], Op::GlobalAvgPool { x }))
    }

    /// Per-position maximum over one or more same-shape tensors. Ties go to
    /// the earliest input, and so does the backward gradient.
    pub fn elementwise_max(&mut self, xs: &[TensorId]) -> Result<TensorId, TensorError> {
        if xs.is_empty() {
            return Err(TensorError::EmptyInput {
                op: "elementwise_max",
            });
        }
        let shape = self.values[xs[0].0].shape().to_vec();
        for &x in &xs[1..] {
            let sx = self.values[x.0].shape();
            if sx != shape.as_slice() {
                return Err(TensorError::DimensionMismatch {
                    op: "elementwise_max",
                    lhs: shape,
                    rhs: sx.to_vec(),
                });
            }
        }
        let numel = self.values[xs[0].0].numel();
        let mut data = self.values[xs[0].0].data().to_vec();
        let mut argmax = vec![0usize; numel];
        for (idx, &x) in xs.iter().enumerate().skip(1) {
            let xd = self.values[x.0].data();
            for pos in 0..numel {
                if xd[pos] > data[pos] {
                    data[pos] = xd[pos];
                    argmax[pos] = idx;
                }
            }
        }
        Ok(self.push_op(
            shape,
            data,
            xs,
            Op::MaxMerge {
                xs: xs.to_vec(),
                argmax,
            },
        ))
    }

    /// Stack rank-1 tensors of length `d` as the columns of a `[d, K]` matrix.
    pub fn concat_columns(&mut self, xs: &[TensorId]) -> Result<TensorId, TensorError> {
        if xs.is_empty() {
            return Err(TensorError::EmptyInput {
                op: "concat_columns",
            });
        }
        let d = {
            let s = self.values[xs[0].0].shape();
            if s.len() != 1 {
                return Err(TensorError::RankMismatch {
                    op: "concat_columns",
                    expected: 1,
                    shape: s.to_vec(),
                });
            }
            s[0]
        };
        for &x in xs {
            let s = self.values[x.0].shape();
            if s != [d] {
                return Err(TensorError::DimensionMismatch {
                    op: "concat_columns",
                    lhs: vec![d],
                    rhs: s.to_vec(),
                });
            }
        }
        let kk = xs.len();
        let mut data = vec![0.0; d * kk];
        for (col, &x) in xs.iter().enumerate() {
            let xd = self.values[x.0].data();
            for r in 0..d {
                data[r * kk + col] = xd[r];
            }
        }
        Ok(self.push_op(vec![d, kk], data, xs, Op::ConcatColumns { xs: xs.to_vec() }))
    }

    /// Cross-entropy of rank-1 logits against a class index, computed through
    /// the log-sum-exp shift. Output is a scalar (shape `[]`).
    pub fn softmax_cross_entropy(
        &mut self,
        logits: TensorId,
        target: usize,
    ) -> Result<TensorId, TensorError> {
        let tl = &self.values[logits.0];
        let s = tl.shape();
        if s.len() != 1 {
            return Err(TensorError::RankMismatch {
                op: "softmax_cross_entropy",
                expected: 1,
                shape: s.to_vec(),
            });
        }
        if target >= s[0] {
            return Err(TensorError::IndexOutOfRange {
                op: "softmax_cross_entropy",
                index: target,
                len: s[0],
            });
        }
        let x = tl.data();
        let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = x.iter().map(|&v| (v - m).exp()).sum();
        let loss = m + sum_exp.ln() - x[target];
        let probs = softmax(x);
        Ok(self.push_op(
            vec![],
            vec![loss],
            &[logits],
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
        ))
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar output. Gradients accumulate into every
    /// tracked node, leaves included.
    pub fn backward(&mut self, output: TensorId) -> Result<(), TensorError> {
        if self.values[output.0].numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: self.values[output.0].shape().to_vec(),
            });
        }
        match &mut self.grads[output.0] {
            Some(g) => g[0] = 1.0,
            // nothing on this tape is trainable; backward is a no-op
            None => return Ok(()),
        }
        for idx in (0..=output.0).rev() {
            let (head, tail) = self.grads.split_at_mut(idx);
            let dy = match &tail[0] {
                Some(g) => g.as_slice(),
                None => continue,
            };
            apply_backward(&self.ops[idx], &self.values, head, dy);
        }
        Ok(())
    }
}

/// Mutable gradient of an upstream node, if tracked.
fn grad_of(head: &mut [Option<Vec<f64>>], id: TensorId) -> Option<&mut [f64]> {
    head[id.0].as_deref_mut()
}

fn apply_backward(op: &Op, values: &[Tensor], head: &mut [Option<Vec<f64>>], dy: &[f64]) {
    match op {
        Op::Leaf => {}
        Op::Add { a, b } => {
            if let Some(g) = grad_of(head, *a) {
                g.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
            }
            if let Some(g) = grad_of(head, *b) {
                g.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
            }
        }
        Op::Scale { a, factor } => {
            if let Some(g) = grad_of(head, *a) {
                g.iter_mut().zip(dy).for_each(|(g, d)| *g += d * factor);
            }
        }
        Op::Matmul { a, b } => {
            let (m, k) = {
                let s = values[a.0].shape();
                (s[0], s[1])
            };
            let n = values[b.0].shape()[1];
            let (ad, bd) = (values[a.0].data(), values[b.0].data());
            // dA = dC Bᵀ
            if let Some(g) = grad_of(head, *a) {
                for i in 0..m {
                    let dy_row = &dy[i * n..(i + 1) * n];
                    let g_row = &mut g[i * k..(i + 1) * k];
                    for (p, gp) in g_row.iter_mut().enumerate() {
                        let b_row = &bd[p * n..(p + 1) * n];
                        let mut acc = 0.0;
                        for (d, bv) in dy_row.iter().zip(b_row) {
                            acc += d * bv;
                        }
                        *gp += acc;
                    }
                }
            }
            // dB = Aᵀ dC
            if let Some(g) = grad_of(head, *b) {
                for i in 0..m {
                    let dy_row = &dy[i * n..(i + 1) * n];
                    let a_row = &ad[i * k..(i + 1) * k];
                    for (p, &av) in a_row.iter().enumerate() {
                        let g_row = &mut g[p * n..(p + 1) * n];
                        for (gv, d) in g_row.iter_mut().zip(dy_row) {
                            *gv += av * d;
                        }
                    }
                }
            }
        }
        Op::Transpose { a } => {
            let s = values[a.0].shape();
            let (m, n) = (s[0], s[1]);
            if let Some(g) = grad_of(head, *a) {
                for i in 0..m {
                    for j in 0..n {
                        g[i * n + j] += dy[j * m + i];
                    }
                }
            }
        }
        Op::Reshape { a } => {
            if let Some(g) = grad_of(head, *a) {
                g.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
            }
        }
        Op::Sigmoid { a } => {
            // the output value is not in `head`; recompute from the input
            let x = values[a.0].data();
            if let Some(g) = grad_of(head, *a) {
                for (i, gi) in g.iter_mut().enumerate() {
                    let y = sigmoid_scalar(x[i]);
                    *gi += dy[i] * y * (1.0 - y);
                }
            }
        }
        Op::Relu { a } => {
            let x = values[a.0].data();
            if let Some(g) = grad_of(head, *a) {
                for (i, gi) in g.iter_mut().enumerate() {
                    if x[i] > 0.0 {
                        *gi += dy[i];
                    }
                }
            }
        }
        Op::Pad2d { a, pad } => {
            let pad = *pad;
            let s = values[a.0].shape();
            let (c, h, w) = (s[0], s[1], s[2]);
            let (hp, wp) = (h + 2 * pad, w + 2 * pad);
            if let Some(g) = grad_of(head, *a) {
                for ch in 0..c {
                    for i in 0..h {
                        let src = &dy[chw_offset(wp, hp, ch, i + pad, pad)..][..w];
                        let dst = &mut g[chw_offset(w, h, ch, i, 0)..][..w];
                        dst.iter_mut().zip(src).for_each(|(g, d)| *g += d);
                    }
                }
            }
        }
        Op::Conv2d { x, kernel, stride } => {
            let sx = values[x.0].shape();
            let sk = values[kernel.0].shape();
            let (c_in, h, w) = (sx[0], sx[1], sx[2]);
            let (c_out, k) = (sk[0], sk[2]);
            let stride = *stride;
            let h_out = (h - k) / stride + 1;
            let w_out = (w - k) / stride + 1;
            let xd = values[x.0].data();
            let kd = values[kernel.0].data();
            if grad_of(head, *kernel).is_some() {
                for o in 0..c_out {
                    for p in 0..h_out {
                        let dy_row = &dy[chw_offset(w_out, h_out, o, p, 0)..][..w_out];
                        for i in 0..c_in {
                            for di in 0..k {
                                let x_row = &xd[chw_offset(w, h, i, p * stride + di, 0)..][..w];
                                let g = grad_of(head, *kernel).unwrap();
                                let g_row = &mut g[((o * c_in + i) * k + di) * k..][..k];
                                for (q, &d) in dy_row.iter().enumerate() {
                                    let window = &x_row[q * stride..q * stride + k];
                                    for (gv, xv) in g_row.iter_mut().zip(window) {
                                        *gv += d * xv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if grad_of(head, *x).is_some() {
                for o in 0..c_out {
                    for p in 0..h_out {
                        let dy_row = &dy[chw_offset(w_out, h_out, o, p, 0)..][..w_out];
                        for i in 0..c_in {
                            for di in 0..k {
                                let k_row = &kd[((o * c_in + i) * k + di) * k..][..k];
                                let g = grad_of(head, *x).unwrap();
                                let g_row =
                                    &mut g[chw_offset(w, h, i, p * stride + di, 0)..][..w];
                                for (q, &d) in dy_row.iter().enumerate() {
                                    let window = &mut g_row[q * stride..q * stride + k];
                                    for (gv, kv) in window.iter_mut().zip(k_row) {
                                        *gv += d * kv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Op::ChannelBias { x, bias } => {
            let s = values[x.0].shape();
            let (c, h, w) = (s[0], s[1], s[2]);
            if let Some(g) = grad_of(head, *x) {
                g.iter_mut().zip(dy).for_each(|(g, d)| *g += d);
            }
            if let Some(g) = grad_of(head, *bias) {
                for ch in 0..c {
                    let mut acc = 0.0;
                    for v in &dy[ch * h * w..(ch + 1) * h * w] {
                        acc += *v;
                    }
                    g[ch] += acc;
                }
            }
        }
        Op::GlobalAvgPool { x } => {
            let s = values[x.0].shape();
            let (c, h, w) = (s[0], s[1], s[2]);
            let inv = 1.0 / (h * w) as f64;
            if let Some(g) = grad_of(head, *x) {
                for ch in 0..c {
                    let d = dy[ch] * inv;
                    for v in &mut g[ch * h * w..(ch + 1) * h * w] {
                        *v += d;
                    }
                }
            }
        }
        Op::MaxMerge { xs, argmax } => {
            for (idx, &x) in xs.iter().enumerate() {
                if let Some(g) = grad_of(head, x) {
                    for (pos, &winner) in argmax.iter().enumerate() {
                        if winner == idx {
                            g[pos] += dy[pos];
                        }
                    }
                }
            }
        }
        Op::ConcatColumns { xs } => {
            let kk = xs.len();
            for (col, &x) in xs.iter().enumerate() {
                if let Some(g) = grad_of(head, x) {
                    for (r, gv) in g.iter_mut().enumerate() {
                        *gv += dy[r * kk + col];
                    }
                }
            }
        }
        Op::SoftmaxCrossEntropy {
            logits,
            target,
            probs,
        } => {
            let d = dy[0];
            if let Some(g) = grad_of(head, *logits) {
                for (j, gj) in g.iter_mut().enumerate() {
                    let indicator = if j == *target { 1.0 } else { 0.0 };
                    *gj += d * (probs[j] - indicator);
                }
            }
        }
    }
}

/// Plain `[m, k] x [k, n]` matrix product used by the tape and by oracles.
pub fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            let crow = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += av * brow[j];
            }
        }
    }
    c
}
