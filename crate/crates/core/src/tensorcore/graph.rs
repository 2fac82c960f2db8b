use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{flush, gemm, Result, Tensor, TensorError};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Additive mask applied to softmax logits before normalizing.
#[derive(Debug, Clone)]
pub enum SoftmaxMask {
    None,
    /// `M[i][j] = -inf` for `i < j`.
    Causal,
    /// Explicit row-major additive mask; `-inf` entries are excluded.
    Additive(Vec<f32>),
}

enum Op {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f32),
    Relu(Var),
    Sigmoid(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Dropout { x: Var, mask: Vec<f32> },
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Gather { table: Var, ids: Vec<usize> },
    SquaredError { pred: Var, target: Vec<f32>, denom: f32 },
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f32> },
    Sum(Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// A single forward computation recorded for reverse-mode differentiation.
///
/// Parameters are borrowed, not copied. Nodes are appended in evaluation order, so
/// the tape is already topologically sorted and `backward` walks it in reverse.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f32>>>,
    rng: Option<ChaCha8Rng>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            rng: None,
        }
    }

    /// Training-mode graph; dropout masks are drawn from `seed`.
    pub fn training(seed: u64) -> Self {
        Self {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_owned(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Cow::Owned(value), op, needs_grad)
    }

    /// Differentiable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    /// Differentiable leaf owning its value.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f32]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).dims2(op)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (l, r) = (self.value(a).shape(), self.value(b).shape());
        if l != r {
            return Err(TensorError::ShapeMismatch {
                op,
                left: l.to_vec(),
                right: r.to_vec(),
            });
        }
        Ok(())
    }

    /// `op(a) * op(b)` where `op` transposes when the flag is set.
    pub fn matmul_t(&mut self, a: Var, ta: bool, b: Var, tb: bool) -> Result<Var> {
        let (ar, ac) = self.dims(a, "matmul")?;
        let (br, bc) = self.dims(b, "matmul")?;
        let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if tb { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            self.value(a).data(),
            ac,
            ta,
            self.value(b).data(),
            bc,
            tb,
            &mut out,
            (m, k, n),
            (n as isize, 1),
            false,
        );
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push_owned(value, Op::MatMul { a, b, ta, tb }, &[a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, false, b, false)
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        self.same_shape(a, b, name)?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "add", |p, q| p + q)?;
        Ok(self.push_owned(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "sub", |p, q| p - q)?;
        Ok(self.push_owned(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip(a, b, "mul", |p, q| p * q)?;
        Ok(self.push_owned(v, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a `1 x n` row vector to every row of an `m x n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a, "add_row")?;
        let (rr, rc) = self.dims(row, "add_row")?;
        if rr != 1 || rc != n {
            return Err(TensorError::ShapeMismatch {
                op: "add_row",
                left: vec![m, n],
                right: vec![rr, rc],
            });
        }
        let bias = self.value(row).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            for (x, b) in chunk.iter_mut().zip(bias) {
                *x += b;
            }
        }
        let value = Tensor::matrix(m, n, data)?;
        Ok(self.push_owned(value, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Var {
        let x = self.value(a);
        let value = Tensor {
            shape: x.shape().to_vec(),
            data: x.data().iter().map(|v| v * s).collect(),
        };
        self.push_owned(value, Op::Scale(a, s), &[a])
    }

    fn map(&self, a: Var, f: impl Fn(f32) -> f32) -> Tensor {
        let x = self.value(a);
        Tensor {
            shape: x.shape().to_vec(),
            data: x.data().iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.map(a, |x| x.max(0.0));
        self.push_owned(v, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.map(a, sigmoid);
        self.push_owned(v, Op::Sigmoid(a), &[a])
    }

    /// Row-wise `softmax(a + M)`. Masked entries come out exactly zero.
    pub fn softmax(&mut self, a: Var, mask: &SoftmaxMask) -> Result<Var> {
        let (m, n) = self.dims(a, "softmax")?;
        if let SoftmaxMask::Additive(mk) = mask {
            if mk.len() != m * n {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax mask",
                    left: vec![m, n],
                    right: vec![mk.len()],
                });
            }
        }
        let x = self.value(a).data();
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let row = &x[i * n..(i + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            let logit = |j: usize| -> f32 {
                match mask {
                    SoftmaxMask::None => row[j],
                    SoftmaxMask::Causal => {
                        if j > i {
                            f32::NEG_INFINITY
                        } else {
                            row[j]
                        }
                    }
                    SoftmaxMask::Additive(mk) => row[j] + mk[i * n + j],
                }
            };
            let max = (0..n).map(logit).fold(f32::NEG_INFINITY, f32::max);
            if max == f32::NEG_INFINITY {
                // Fully masked row.
                continue;
            }
            let mut sum = 0.0;
            for (j, d) in dst.iter_mut().enumerate() {
                let l = logit(j);
                *d = if l == f32::NEG_INFINITY { 0.0 } else { (l - max).exp() };
                sum += *d;
            }
            for d in dst.iter_mut() {
                *d = flush(*d / sum);
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push_owned(value, Op::Softmax(a), &[a]))
    }

    /// Row-wise layer normalization with `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let (m, n) = self.dims(x, "layer_norm")?;
        for p in [gamma, beta] {
            if self.value(p).shape() != [1, n] {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    left: vec![1, n],
                    right: self.value(p).shape().to_vec(),
                });
            }
        }
        let data = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &data[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f32>() / n as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n as f32;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..n {
                let h = (row[j] - mean) * is;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push_owned(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Inverted dropout; the identity on evaluation graphs or when `rate` is zero.
    pub fn dropout(&mut self, x: Var, rate: f32) -> Var {
        if rate <= 0.0 {
            return x;
        }
        let Some(rng) = self.rng.as_mut() else {
            return x;
        };
        let keep = 1.0 / (1.0 - rate);
        let n = self.nodes[x.0].value.numel();
        let mask: Vec<f32> = (0..n)
            .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { keep })
            .collect();
        let src = self.value(x);
        let value = Tensor {
            shape: src.shape().to_vec(),
            data: src.data().iter().zip(&mask).map(|(a, m)| a * m).collect(),
        };
        self.push_owned(value, Op::Dropout { x, mask }, &[x])
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims(x, "slice_cols")?;
        if start + len > n {
            return Err(TensorError::IndexOutOfRange {
                index: start + len,
                len: n,
            });
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&src[i * n + start..i * n + start + len]);
        }
        let value = Tensor::matrix(m, len, out)?;
        Ok(self.push_owned(value, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.dims(parts[0], "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims(p, "concat_cols")?;
            if r != m {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: vec![m],
                    right: vec![r],
                });
            }
            widths.push(c);
        }
        let n: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push_owned(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Embedding lookup: rows of `table` selected by `ids`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(table, "gather_rows")?;
        let src = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= r {
                return Err(TensorError::IndexOutOfRange { index: id, len: r });
            }
            out.extend_from_slice(&src[id * c..(id + 1) * c]);
        }
        let value = Tensor::matrix(ids.len(), c, out)?;
        Ok(self.push_owned(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// `sum((pred - target)^2) / denom` as a scalar.
    pub fn squared_error(&mut self, pred: Var, target: &[f32], denom: f32) -> Result<Var> {
        let p = self.value(pred);
        if p.numel() != target.len() {
            return Err(TensorError::ShapeMismatch {
                op: "squared_error",
                left: p.shape().to_vec(),
                right: vec![target.len()],
            });
        }
        let s: f32 = p.data().iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.push_owned(
            Tensor::scalar(s / denom),
            Op::SquaredError {
                pred,
                target: target.to_vec(),
                denom,
            },
            &[pred],
        ))
    }

    /// Mean squared error over every entry.
    pub fn mse(&mut self, pred: Var, target: &[f32]) -> Result<Var> {
        let denom = target.len().max(1) as f32;
        self.squared_error(pred, target, denom)
    }

    /// Mean softmax cross-entropy of `m x d` logits against class labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (m, d) = self.dims(logits, "cross_entropy")?;
        if labels.len() != m {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                left: vec![m, d],
                right: vec![labels.len()],
            });
        }
        let x = self.value(logits).data();
        let mut probs = vec![0.0; m * d];
        let mut loss = 0.0f64;
        for (i, &label) in labels.iter().enumerate() {
            if label >= d {
                return Err(TensorError::IndexOutOfRange { index: label, len: d });
            }
            let row = &x[i * d..(i + 1) * d];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let sum: f32 = row.iter().map(|v| (v - max).exp()).sum();
            for j in 0..d {
                probs[i * d + j] = flush((row[j] - max).exp() / sum);
            }
            loss += f64::from(sum.ln() + max - row[label]);
        }
        let value = Tensor::scalar((loss / m.max(1) as f64) as f32);
        Ok(self.push_owned(
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push_owned(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Populates gradients of `loss` for every node it depends on.
    ///
    /// Gradients from multiple uses of a node are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f32], grads: &mut [Option<Vec<f32>>]) {
        let node = &self.nodes[i];
        let out = node.value.data();
        let nodes = &self.nodes;
        // Runs `body` on the input's accumulation buffer, created zeroed on first use.
        macro_rules! with_grad {
            ($v:expr, |$buf:ident| $body:block) => {{
                let v: Var = $v;
                if nodes[v.0].needs_grad {
                    let n = nodes[v.0].value.numel();
                    let $buf: &mut Vec<f32> = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
                    $body
                }
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                let av = self.value(a);
                let bv = self.value(b);
                let (ar, ac) = (av.rows(), av.cols());
                let (br, bc) = (bv.rows(), bv.cols());
                let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
                let n = if tb { br } else { bc };
                with_grad!(a, |ga| {
                    // d op(A) = dC * op(B)^T, written through A's storage layout.
                    let c_strides = if ta { (1, m as isize) } else { (k as isize, 1) };
                    gemm(g, n, false, bv.data(), bc, !tb, ga, (m, n, k), c_strides, true);
                });
                with_grad!(b, |gb| {
                    // d op(B) = op(A)^T * dC.
                    let c_strides = if tb { (1, k as isize) } else { (n as isize, 1) };
                    gemm(av.data(), ac, !ta, g, n, false, gb, (k, m, n), c_strides, true);
                });
            }
            Op::Add(a, b) => {
                with_grad!(*a, |ga| { axpy(ga, g, 1.0) });
                with_grad!(*b, |gb| { axpy(gb, g, 1.0) });
            }
            Op::Sub(a, b) => {
                with_grad!(*a, |ga| { axpy(ga, g, 1.0) });
                with_grad!(*b, |gb| { axpy(gb, g, -1.0) });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                with_grad!(*a, |ga| {
                    for ((d, gi), y) in ga.iter_mut().zip(g).zip(bv) {
                        *d += gi * y;
                    }
                });
                with_grad!(*b, |gb| {
                    for ((d, gi), x) in gb.iter_mut().zip(g).zip(av) {
                        *d += gi * x;
                    }
                });
            }
            Op::AddRow(a, row) => {
                with_grad!(*a, |ga| { axpy(ga, g, 1.0) });
                with_grad!(*row, |gr| {
                    let n = gr.len();
                    for chunk in g.chunks_exact(n) {
                        axpy(gr, chunk, 1.0);
                    }
                });
            }
            Op::Scale(a, s) => {
                with_grad!(*a, |ga| { axpy(ga, g, *s) });
            }
            Op::Relu(a) => {
                with_grad!(*a, |ga| {
                    for ((d, gi), y) in ga.iter_mut().zip(g).zip(out) {
                        if *y > 0.0 {
                            *d += gi;
                        }
                    }
                });
            }
            Op::Sigmoid(a) => {
                with_grad!(*a, |ga| {
                    for ((d, gi), y) in ga.iter_mut().zip(g).zip(out) {
                        *d += gi * y * (1.0 - y);
                    }
                });
            }
            Op::Softmax(a) => {
                let n = node.value.cols();
                with_grad!(*a, |ga| {
                    for ((dr, gr), yr) in ga.chunks_exact_mut(n).zip(g.chunks_exact(n)).zip(out.chunks_exact(n)) {
                        let dot: f32 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for ((d, gi), y) in dr.iter_mut().zip(gr).zip(yr) {
                            *d += y * (gi - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let n = node.value.cols();
                let gv = self.value(*gamma).data();
                with_grad!(*gamma, |gg| {
                    for (gr, hr) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for ((d, gi), h) in gg.iter_mut().zip(gr).zip(hr) {
                            *d += gi * h;
                        }
                    }
                });
                with_grad!(*beta, |gb| {
                    for gr in g.chunks_exact(n) {
                        axpy(gb, gr, 1.0);
                    }
                });
                with_grad!(*x, |gx| {
                    let nf = n as f32;
                    for (r, ((dr, gr), hr)) in gx
                        .chunks_exact_mut(n)
                        .zip(g.chunks_exact(n))
                        .zip(xhat.chunks_exact(n))
                        .enumerate()
                    {
                        let mut sum_dh = 0.0;
                        let mut sum_dh_h = 0.0;
                        for j in 0..n {
                            let dh = gr[j] * gv[j];
                            sum_dh += dh;
                            sum_dh_h += dh * hr[j];
                        }
                        let scale = inv_std[r] / nf;
                        for j in 0..n {
                            let dh = gr[j] * gv[j];
                            dr[j] += scale * (nf * dh - sum_dh - hr[j] * sum_dh_h);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                with_grad!(*x, |gx| {
                    for ((d, gi), m) in gx.iter_mut().zip(g).zip(mask) {
                        *d += gi * m;
                    }
                });
            }
            Op::SliceCols { x, start } => {
                let w = node.value.cols();
                let n = self.value(*x).cols();
                with_grad!(*x, |gx| {
                    for (r, gr) in g.chunks_exact(w).enumerate() {
                        axpy(&mut gx[r * n + start..r * n + start + w], gr, 1.0);
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let n = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    with_grad!(p, |gp| {
                        for (r, dr) in gp.chunks_exact_mut(w).enumerate() {
                            axpy(dr, &g[r * n + offset..r * n + offset + w], 1.0);
                        }
                    });
                    offset += w;
                }
            }
            Op::Gather { table, ids } => {
                let c = node.value.cols();
                with_grad!(*table, |gt| {
                    for (gr, &id) in g.chunks_exact(c).zip(ids) {
                        axpy(&mut gt[id * c..(id + 1) * c], gr, 1.0);
                    }
                });
            }
            Op::SquaredError { pred, target, denom } => {
                let p = self.value(*pred).data();
                let s = 2.0 * g[0] / denom;
                with_grad!(*pred, |gp| {
                    for ((d, a), b) in gp.iter_mut().zip(p).zip(target) {
                        *d += s * (a - b);
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let d = self.value(*logits).cols();
                let s = g[0] / labels.len().max(1) as f32;
                with_grad!(*logits, |gl| {
                    for (r, &label) in labels.iter().enumerate() {
                        for j in 0..d {
                            let onehot = if j == label { 1.0 } else { 0.0 };
                            gl[r * d + j] += s * (probs[r * d + j] - onehot);
                        }
                    }
                });
            }
            Op::Sum(a) => {
                with_grad!(*a, |ga| {
                    for d in ga.iter_mut() {
                        *d += g[0];
                    }
                });
            }
        }
    }
}

fn axpy(dst: &mut [f32], src: &[f32], alpha: f32) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f32]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut g = Graph::new();
        let x = g.constant(t(1, 2, &[0.0, f32::NEG_INFINITY]));
        let y = g.softmax(x, &SoftmaxMask::None).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0]);

        let x = g.constant(t(3, 3, &[0.3, -1.0, 2.0, 0.5, 0.1, 9.0, 1.0, 2.0, 3.0]));
        let y = g.softmax(x, &SoftmaxMask::Causal).unwrap();
        let v = g.value(y).data();
        assert_eq!(v[0], 1.0);
        assert_eq!(&v[1..3], &[0.0, 0.0]);
        assert_eq!(v[5], 0.0);
        for r in 0..3 {
            let s: f32 = v[r * 3..r * 3 + 3].iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn masked_logits_get_exactly_zero_gradient() {
        let mut g = Graph::new();
        let x = g.input(t(2, 2, &[0.4, 7.0, -0.2, 0.9]));
        let y = g.softmax(x, &SoftmaxMask::Causal).unwrap();
        let w = g.constant(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let p = g.mul(y, w).unwrap();
        let loss = g.sum(p);
        g.backward(loss).unwrap();
        let grad = g.grad(x).unwrap();
        assert_eq!(grad[1], 0.0);
        assert!(grad[2] != 0.0);
    }

    #[test]
    fn relu_and_layer_norm_basics() {
        let mut g = Graph::new();
        let x = g.constant(t(1, 2, &[-1.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y).data(), &[0.0, 2.0]);

        let c = g.constant(t(1, 4, &[3.0; 4]));
        let gamma = g.constant(t(1, 4, &[1.0; 4]));
        let beta = g.constant(t(1, 4, &[0.0; 4]));
        let n = g.layer_norm(c, gamma, beta, 1e-5).unwrap();
        assert!(g.value(n).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn product_rule_for_scalars() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(3.0));
        let y = g.input(Tensor::scalar(-2.5));
        let p = g.mul(x, y).unwrap();
        g.backward(p).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[-2.5]);
        assert_eq!(g.grad(y).unwrap(), &[3.0]);
    }

    #[test]
    fn gradients_accumulate_over_uses() {
        let mut g = Graph::new();
        let x = g.input(Tensor::scalar(1.5));
        let s = g.add(x, x).unwrap();
        let p = g.mul(s, x).unwrap(); // 2x^2
        g.backward(p).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let x = g.input(t(1, 2, &[1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn dropout_is_identity_in_eval_and_scaled_in_training() {
        let mut g = Graph::new();
        let x = g.constant(t(1, 4, &[1.0; 4]));
        assert_eq!(g.dropout(x, 0.5), x);

        let mut g = Graph::training(3);
        let x = g.constant(t(50, 40, &[1.0; 2000]));
        let y = g.dropout(x, 0.2);
        let v = g.value(y).data();
        assert!(v.iter().all(|&a| a == 0.0 || (a - 1.25).abs() < 1e-6));
        let kept = v.iter().filter(|&&a| a > 0.0).count() as f32 / 2000.0;
        assert!((kept - 0.8).abs() < 0.05);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut g = Graph::new();
        let a = g.constant(t(2, 3, &[0.0; 6]));
        let b = g.constant(t(2, 3, &[0.0; 6]));
        assert!(matches!(g.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
        let c = g.constant(t(3, 2, &[0.0; 6]));
        assert!(g.add(a, c).is_err());
    }
}
