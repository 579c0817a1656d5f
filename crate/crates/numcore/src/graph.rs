//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Each operation appends a
//! node holding its value, so node indices are already a topological order and
//! the backward sweep is a single reverse walk over the tape.

use crate::error::{NumError, Result};
use crate::kernels::{broadcast_map, broadcast_shape, gemm, numel, permute_data, reduce_to, split_axis};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Element-wise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Exp,
    /// Tanh approximation of GELU.
    Gelu,
    Silu,
    Softplus,
    Sigmoid,
    Tanh,
    Square,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl Unary {
    fn eval<S: Scalar>(self, x: S) -> S {
        match self {
            Unary::Exp => x.exp(),
            Unary::Gelu => {
                let u = S::lit(GELU_C) * (x + S::lit(GELU_A) * x * x * x);
                S::lit(0.5) * x * (S::one() + u.tanh())
            }
            Unary::Silu => x * sigmoid(x),
            Unary::Softplus => x.max(S::zero()) + (-x.abs()).exp().ln_1p(),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Square => x * x,
        }
    }

    /// Derivative at input `x` given output `y`.
    fn deriv<S: Scalar>(self, x: S, y: S) -> S {
        match self {
            Unary::Exp => y,
            Unary::Gelu => {
                let c = S::lit(GELU_C);
                let a = S::lit(GELU_A);
                let t = (c * (x + a * x * x * x)).tanh();
                let half = S::lit(0.5);
                half * (S::one() + t)
                    + half * x * (S::one() - t * t) * c * (S::one() + S::lit(3.0) * a * x * x)
            }
            Unary::Silu => {
                let s = sigmoid(x);
                s * (S::one() + x * (S::one() - s))
            }
            Unary::Softplus => sigmoid(x),
            Unary::Sigmoid => y * (S::one() - y),
            Unary::Tanh => S::one() - y * y,
            Unary::Square => S::lit(2.0) * x,
        }
    }
}

enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, S),
    Offset(Var),
    Unary(Var, Unary),
    MatMul(Var, Var),
    Permute(Var, Vec<usize>),
    Reshape(Var),
    Narrow { x: Var, axis: usize, start: usize },
    Concat { parts: Vec<Var>, axis: usize },
    SelectRows { x: Var, rows: Vec<usize> },
    GatherTokens { x: Var, positions: Vec<usize> },
    Sum(Var),
    Mean(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, axis: usize, xhat: Vec<S>, rstd: Vec<S> },
    Softmax(Var),
    NormLast(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<S> },
    CausalConv { x: Var, w: Var, b: Var },
    Scan { u: Var, delta: Var, a: Var, b: Var, c: Var, d: Var, states: Vec<S> },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Recording of one forward computation.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf: gradients are accumulated for it.
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf (inputs, masks, fixed matrices).
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, op, rg)
    }

    fn tensor(shape: Vec<usize>, data: Vec<S>) -> Tensor<S> {
        Tensor::new(shape, data).expect("kernel produced consistent shape")
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(&sa, &sb).map_err(|_| {
            NumError::shape(op, format!("{sa:?} and {sb:?} do not broadcast"))
        })?;
        let da = self.value(a).data();
        let db = self.value(b).data();
        let data: Vec<S> = if sa == sb {
            da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let ma = broadcast_map(&out_shape, &sa);
            let mb = broadcast_map(&out_shape, &sb);
            ma.iter().zip(&mb).map(|(&i, &j)| f(da[i], db[j])).collect()
        };
        Ok(Self::tensor(out_shape, data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.derived(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.derived(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.derived(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "div", |x, y| x / y)?;
        Ok(self.derived(t, Op::Div(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, c: S) -> Var {
        let t = self.value(x).map(|v| v * c);
        self.derived(t, Op::Scale(x, c), &[x])
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -S::one())
    }

    pub fn add_scalar(&mut self, x: Var, c: S) -> Var {
        let t = self.value(x).map(|v| v + c);
        self.derived(t, Op::Offset(x), &[x])
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Var {
        let t = self.value(x).map(|v| f.eval(v));
        self.derived(t, Op::Unary(x, f), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Gelu)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Silu)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Softplus)
    }

    /// Batched matrix product over the last two axes.
    ///
    /// Either operand may be a plain matrix, in which case it is shared
    /// across the batch of the other; otherwise batch axes must agree.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let geo = MatMulGeometry::new(self.shape(a), self.shape(b))?;
        let da = self.value(a).data();
        let db = self.value(b).data();
        let mut out = vec![S::zero(); geo.batch * geo.m * geo.n];
        for bi in 0..geo.batch {
            gemm(
                geo.m,
                geo.k,
                geo.n,
                &da[bi * geo.a_bs..],
                (geo.k, 1),
                &db[bi * geo.b_bs..],
                (geo.n, 1),
                &mut out[bi * geo.m * geo.n..(bi + 1) * geo.m * geo.n],
            );
        }
        let t = Self::tensor(geo.out_shape.clone(), out);
        Ok(self.derived(t, Op::MatMul(a, b), &[a, b]))
    }

    /// Affine map `x · w + b` over the last axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }

    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(NumError::shape("permute", format!("axes {axes:?} for shape {shape:?}")));
        }
        let (data, new_shape) = permute_data(self.value(x).data(), &shape, axes);
        let t = Self::tensor(new_shape, data);
        Ok(self.derived(t, Op::Permute(x, axes.to_vec()), &[x]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let r = self.shape(x).len();
        if r < 2 {
            return Err(NumError::shape("transpose", "rank < 2"));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 2, r - 1);
        self.permute(x, &axes)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.derived(t, Op::Reshape(x), &[x]))
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(NumError::shape(
                "narrow",
                format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let t = Self::tensor(new_shape, data);
        Ok(self.derived(t, Op::Narrow { x, axis, start }, &[x]))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| NumError::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(NumError::shape("concat", format!("axis {axis} for {base:?}")));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(NumError::shape("concat", format!("{s:?} vs {base:?}")));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_axis(&base, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let len = self.shape(*p)[axis] * inner;
                data.extend_from_slice(&self.value(*p).data()[o * len..(o + 1) * len]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let t = Self::tensor(shape, data);
        Ok(self.derived(t, Op::Concat { parts: parts.to_vec(), axis }, parts))
    }

    /// Rows of `x` (first axis) in the given order; an embedding lookup.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.is_empty() {
            return Err(NumError::shape("select_rows", "scalar input"));
        }
        let row_len = numel(&shape[1..]);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows.len() * row_len);
        for &r in rows {
            if r >= shape[0] {
                return Err(NumError::Index(format!("row {r} of {}", shape[0])));
            }
            data.extend_from_slice(&src[r * row_len..(r + 1) * row_len]);
        }
        let mut new_shape = shape;
        new_shape[0] = rows.len();
        let t = Self::tensor(new_shape, data);
        Ok(self.derived(t, Op::SelectRows { x, rows: rows.to_vec() }, &[x]))
    }

    /// Picks one token per batch element: `x[B, T, D]`, `positions[B]` → `[B, D]`.
    pub fn gather_tokens(&mut self, x: Var, positions: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 || shape[0] != positions.len() {
            return Err(NumError::shape(
                "gather_tokens",
                format!("{shape:?} with {} positions", positions.len()),
            ));
        }
        let (t_len, d) = (shape[1], shape[2]);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(positions.len() * d);
        for (b, &p) in positions.iter().enumerate() {
            if p >= t_len {
                return Err(NumError::Index(format!("token {p} of {t_len}")));
            }
            let off = (b * t_len + p) * d;
            data.extend_from_slice(&src[off..off + d]);
        }
        let t = Self::tensor(vec![positions.len(), d], data);
        Ok(self.derived(t, Op::GatherTokens { x, positions: positions.to_vec() }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let t = Tensor::scalar(self.value(x).sum());
        self.derived(t, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let t = Tensor::scalar(v.sum() / S::lit(v.len() as f64));
        self.derived(t, Op::Mean(x), &[x])
    }

    /// Normalizes every slice along `axis` to zero mean and unit variance
    /// (biased variance, `eps` inside the square root), then applies the
    /// per-position `gain` and `bias` of length `shape[axis]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, axis: usize, eps: S) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(NumError::shape("layer_norm", format!("axis {axis} for {shape:?}")));
        }
        let d = shape[axis];
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(NumError::shape(
                "layer_norm",
                format!("gain {:?} / bias {:?} for axis length {d}", self.shape(gain), self.shape(bias)),
            ));
        }
        let (outer, _, inner) = split_axis(&shape, axis);
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let n = src.len();
        let mut xhat = vec![S::zero(); n];
        let mut out = vec![S::zero(); n];
        let mut rstd = Vec::with_capacity(outer * inner);
        let dn = S::lit(d as f64);
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| o * d * inner + j * inner + i;
                let mean = (0..d).map(|j| src[idx(j)]).sum::<S>() / dn;
                let var = (0..d).map(|j| (src[idx(j)] - mean).powi(2)).sum::<S>() / dn;
                let r = S::one() / (var + eps).sqrt();
                rstd.push(r);
                for j in 0..d {
                    let k = idx(j);
                    xhat[k] = (src[k] - mean) * r;
                    out[k] = xhat[k] * g[j] + b[j];
                }
            }
        }
        let t = Self::tensor(shape, out);
        Ok(self.derived(t, Op::LayerNorm { x, gain, bias, axis, xhat, rstd }, &[x, gain, bias]))
    }

    /// Softmax over the last axis. Entries of `-inf` receive zero weight.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| NumError::shape("softmax", "scalar input"))?;
        let src = self.value(x).data();
        let mut out = vec![S::zero(); src.len()];
        for (row_in, row_out) in src.chunks(d).zip(out.chunks_mut(d)) {
            let max = row_in.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - max).exp();
                z += *o;
            }
            for o in row_out.iter_mut() {
                *o /= z;
            }
        }
        let t = Self::tensor(shape, out);
        Ok(self.derived(t, Op::Softmax(x), &[x]))
    }

    /// Euclidean norm over the last axis; the output drops that axis.
    pub fn norm_last(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().ok_or_else(|| NumError::shape("norm_last", "scalar input"))?;
        let data: Vec<S> = self
            .value(x)
            .data()
            .chunks(d)
            .map(|row| row.iter().map(|&v| v * v).sum::<S>().sqrt())
            .collect();
        let t = Self::tensor(shape[..shape.len() - 1].to_vec(), data);
        Ok(self.derived(t, Op::NormLast(x), &[x]))
    }

    /// Mean softmax cross-entropy of `logits[B, C]` against integer labels.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(NumError::shape(
                "cross_entropy",
                format!("logits {shape:?} with {} labels", labels.len()),
            ));
        }
        let c = shape[1];
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(NumError::Index(format!("label {bad} with {c} classes")));
        }
        let src = self.value(logits).data();
        let mut probs = vec![S::zero(); src.len()];
        let mut total = S::zero();
        for (b, (row, prow)) in src.chunks(c).zip(probs.chunks_mut(c)).enumerate() {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let z: S = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + z.ln();
            total += lse - row[labels[b]];
            for (p, &v) in prow.iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let t = Tensor::scalar(total / S::lit(labels.len() as f64));
        Ok(self.derived(t, Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, &[logits]))
    }

    /// Depthwise causal convolution: `x[B, T, C]`, `w[C, K]`, `b[C]`.
    /// Output frame `t` sees input frames `t-K+1 ..= t` (zeros before 0).
    pub fn causal_conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 2 || ws[0] != xs[2] || self.shape(b) != [xs[2]] {
            return Err(NumError::shape(
                "causal_conv1d",
                format!("x {xs:?}, w {ws:?}, b {:?}", self.shape(b)),
            ));
        }
        let (bn, tn, cn, kn) = (xs[0], xs[1], xs[2], ws[1]);
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![S::zero(); xd.len()];
        for bi in 0..bn {
            for t in 0..tn {
                for c in 0..cn {
                    let mut acc = bd[c];
                    for k in 0..kn {
                        let src_t = t as isize - (kn - 1 - k) as isize;
                        if src_t >= 0 {
                            acc += wd[c * kn + k] * xd[(bi * tn + src_t as usize) * cn + c];
                        }
                    }
                    out[(bi * tn + t) * cn + c] = acc;
                }
            }
        }
        let t = Self::tensor(xs, out);
        Ok(self.derived(t, Op::CausalConv { x, w, b }, &[x, w, b]))
    }

    /// Selective state-space recurrence with diagonal state matrix and
    /// zero-order-hold discretization, evaluated as a sequential scan:
    ///
    /// `h_t = exp(Δ_t·A) ⊙ h_{t-1} + Δ_t·B_t·u_t`, `y_t = C_t·h_t + D ⊙ u_t`.
    ///
    /// Shapes: `u, delta: [B, T, E]`, `a: [E, N]`, `b, c: [B, T, N]`, `d: [E]`.
    #[allow(clippy::too_many_arguments)]
    pub fn selective_scan(&mut self, u: Var, delta: Var, a: Var, b: Var, c: Var, d: Var) -> Result<Var> {
        let us = self.shape(u).to_vec();
        if us.len() != 3 {
            return Err(NumError::shape("selective_scan", format!("u {us:?}")));
        }
        let (bn, tn, en) = (us[0], us[1], us[2]);
        let as_ = self.shape(a).to_vec();
        if as_.len() != 2 || as_[0] != en {
            return Err(NumError::shape("selective_scan", format!("A {as_:?} for E={en}")));
        }
        let nn = as_[1];
        if self.shape(delta) != us.as_slice()
            || self.shape(b) != [bn, tn, nn]
            || self.shape(c) != [bn, tn, nn]
            || self.shape(d) != [en]
        {
            return Err(NumError::shape(
                "selective_scan",
                format!(
                    "delta {:?}, B {:?}, C {:?}, D {:?} for u {us:?}, N={nn}",
                    self.shape(delta),
                    self.shape(b),
                    self.shape(c),
                    self.shape(d)
                ),
            ));
        }
        let ud = self.value(u).data();
        let dd = self.value(delta).data();
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let cd = self.value(c).data();
        let skip = self.value(d).data();
        let mut states = vec![S::zero(); bn * tn * en * nn];
        let mut out = vec![S::zero(); bn * tn * en];
        for bi in 0..bn {
            for t in 0..tn {
                let row = bi * tn + t;
                for e in 0..en {
                    let ut = ud[row * en + e];
                    let dt = dd[row * en + e];
                    let mut y = skip[e] * ut;
                    for n in 0..nn {
                        let prev = if t == 0 { S::zero() } else { states[((row - 1) * en + e) * nn + n] };
                        let h = (dt * ad[e * nn + n]).exp() * prev + dt * bd[row * nn + n] * ut;
                        states[(row * en + e) * nn + n] = h;
                        y += cd[row * nn + n] * h;
                    }
                    out[row * en + e] = y;
                }
            }
        }
        let t = Self::tensor(us, out);
        Ok(self.derived(t, Op::Scan { u, delta, a, b, c, d, states }, &[u, delta, a, b, c, d]))
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(NumError::shape(
                "backward",
                format!("loss must be scalar, got {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backprop_node(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| {
                g.filter(|_| node.requires_grad)
                    .map(|g| Tensor::new(node.value.shape().to_vec(), g).expect("gradient shape"))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<S>>], v: Var, g: Vec<S>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, i: usize, gy: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let out_shape = node.value.shape();
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -S::one() } else { S::one() };
                let ga = reduce_to(gy, out_shape, self.shape(*a));
                self.accumulate(grads, *a, ga);
                let gb: Vec<S> = reduce_to(gy, out_shape, self.shape(*b)).into_iter().map(|v| v * sign).collect();
                self.accumulate(grads, *b, gb);
            }
            Op::Mul(a, b) | Op::Div(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let ma = broadcast_map(out_shape, sa);
                let mb = broadcast_map(out_shape, sb);
                let is_div = matches!(node.op, Op::Div(..));
                if self.nodes[a.0].requires_grad {
                    let full: Vec<S> = gy
                        .iter()
                        .zip(&mb)
                        .map(|(&g, &j)| if is_div { g / db[j] } else { g * db[j] })
                        .collect();
                    self.accumulate(grads, *a, reduce_to(&full, out_shape, sa));
                }
                if self.nodes[b.0].requires_grad {
                    let full: Vec<S> = gy
                        .iter()
                        .zip(ma.iter().zip(&mb))
                        .map(|(&g, (&i, &j))| if is_div { -g * da[i] / (db[j] * db[j]) } else { g * da[i] })
                        .collect();
                    self.accumulate(grads, *b, reduce_to(&full, out_shape, sb));
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, gy.iter().map(|&g| g * *c).collect()),
            Op::Offset(x) | Op::Reshape(x) => self.accumulate(grads, *x, gy.to_vec()),
            Op::Unary(x, f) => {
                let xd = self.value(*x).data();
                let g = gy.iter().zip(xd.iter().zip(y)).map(|(&g, (&xv, &yv))| g * f.deriv(xv, yv)).collect();
                self.accumulate(grads, *x, g);
            }
            Op::MatMul(a, b) => {
                let geo = MatMulGeometry::new(self.shape(*a), self.shape(*b)).expect("validated in forward");
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let (m, k, n) = (geo.m, geo.k, geo.n);
                if self.nodes[a.0].requires_grad {
                    let mut ga = vec![S::zero(); self.value(*a).len()];
                    for bi in 0..geo.batch {
                        // ga = gy · bᵀ
                        gemm(
                            m,
                            n,
                            k,
                            &gy[bi * m * n..],
                            (n, 1),
                            &db[bi * geo.b_bs..],
                            (1, n),
                            &mut ga[bi * geo.a_bs..bi * geo.a_bs + m * k],
                        );
                    }
                    self.accumulate(grads, *a, ga);
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![S::zero(); self.value(*b).len()];
                    for bi in 0..geo.batch {
                        // gb = aᵀ · gy
                        gemm(
                            k,
                            m,
                            n,
                            &da[bi * geo.a_bs..],
                            (1, k),
                            &gy[bi * m * n..],
                            (n, 1),
                            &mut gb[bi * geo.b_bs..bi * geo.b_bs + k * n],
                        );
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Permute(x, axes) => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let (g, _) = permute_data(gy, out_shape, &inverse);
                self.accumulate(grads, *x, g);
            }
            Op::Narrow { x, axis, start } => {
                let in_shape = self.shape(*x);
                let (outer, dim, inner) = split_axis(in_shape, *axis);
                let len = out_shape[*axis];
                let mut g = vec![S::zero(); numel(in_shape)];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    g[dst..dst + len * inner].copy_from_slice(&gy[o * len * inner..(o + 1) * len * inner]);
                }
                self.accumulate(grads, *x, g);
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(out_shape, *axis);
                let mut offset = 0;
                for p in parts {
                    let len = self.shape(*p)[*axis];
                    let mut g = Vec::with_capacity(outer * len * inner);
                    for o in 0..outer {
                        let src = (o * total + offset) * inner;
                        g.extend_from_slice(&gy[src..src + len * inner]);
                    }
                    offset += len;
                    self.accumulate(grads, *p, g);
                }
            }
            Op::SelectRows { x, rows } => {
                let in_shape = self.shape(*x);
                let row_len = numel(&in_shape[1..]);
                let mut g = vec![S::zero(); numel(in_shape)];
                for (k, &r) in rows.iter().enumerate() {
                    for j in 0..row_len {
                        g[r * row_len + j] += gy[k * row_len + j];
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::GatherTokens { x, positions } => {
                let in_shape = self.shape(*x);
                let (t_len, d) = (in_shape[1], in_shape[2]);
                let mut g = vec![S::zero(); numel(in_shape)];
                for (b, &p) in positions.iter().enumerate() {
                    let off = (b * t_len + p) * d;
                    g[off..off + d].copy_from_slice(&gy[b * d..(b + 1) * d]);
                }
                self.accumulate(grads, *x, g);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gy[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gy[0] / S::lit(n as f64); n]);
            }
            Op::LayerNorm { x, gain, bias, axis, xhat, rstd } => {
                let (outer, d, inner) = split_axis(out_shape, *axis);
                let g = self.value(*gain).data();
                let mut gg = vec![S::zero(); d];
                let mut gb = vec![S::zero(); d];
                let mut gx = vec![S::zero(); gy.len()];
                let dn = S::lit(d as f64);
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| o * d * inner + j * inner + i;
                        let mut mean_gh = S::zero();
                        let mut mean_gh_xh = S::zero();
                        for j in 0..d {
                            let k = idx(j);
                            gb[j] += gy[k];
                            gg[j] += gy[k] * xhat[k];
                            let gh = gy[k] * g[j];
                            mean_gh += gh;
                            mean_gh_xh += gh * xhat[k];
                        }
                        mean_gh /= dn;
                        mean_gh_xh /= dn;
                        let r = rstd[o * inner + i];
                        for j in 0..d {
                            let k = idx(j);
                            gx[k] = r * (gy[k] * g[j] - mean_gh - xhat[k] * mean_gh_xh);
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *gain, gg);
                self.accumulate(grads, *bias, gb);
            }
            Op::Softmax(x) => {
                let d = *out_shape.last().expect("rank >= 1");
                let mut gx = vec![S::zero(); gy.len()];
                for ((grow, yrow), out) in gy.chunks(d).zip(y.chunks(d)).zip(gx.chunks_mut(d)) {
                    let dot: S = grow.iter().zip(yrow).map(|(&g, &p)| g * p).sum();
                    for ((o, &g), &p) in out.iter_mut().zip(grow).zip(yrow) {
                        *o = p * (g - dot);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::NormLast(x) => {
                let xd = self.value(*x).data();
                let d = *self.shape(*x).last().expect("rank >= 1");
                let mut gx = vec![S::zero(); xd.len()];
                for (r, (xrow, out)) in xd.chunks(d).zip(gx.chunks_mut(d)).enumerate() {
                    if y[r] > S::zero() {
                        let s = gy[r] / y[r];
                        for (o, &v) in out.iter_mut().zip(xrow) {
                            *o = s * v;
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::CrossEntropy { logits, labels, probs } => {
                let c = self.shape(*logits)[1];
                let scale = gy[0] / S::lit(labels.len() as f64);
                let mut g: Vec<S> = probs.iter().map(|&p| p * scale).collect();
                for (b, &l) in labels.iter().enumerate() {
                    g[b * c + l] -= scale;
                }
                self.accumulate(grads, *logits, g);
            }
            Op::CausalConv { x, w, b } => {
                let xs = self.shape(*x);
                let (bn, tn, cn) = (xs[0], xs[1], xs[2]);
                let kn = self.shape(*w)[1];
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                let mut gx = vec![S::zero(); xd.len()];
                let mut gw = vec![S::zero(); wd.len()];
                let mut gb = vec![S::zero(); cn];
                for bi in 0..bn {
                    for t in 0..tn {
                        for c in 0..cn {
                            let g = gy[(bi * tn + t) * cn + c];
                            gb[c] += g;
                            for k in 0..kn {
                                let src_t = t as isize - (kn - 1 - k) as isize;
                                if src_t >= 0 {
                                    let xi = (bi * tn + src_t as usize) * cn + c;
                                    gw[c * kn + k] += g * xd[xi];
                                    gx[xi] += g * wd[c * kn + k];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
                self.accumulate(grads, *w, gw);
                self.accumulate(grads, *b, gb);
            }
            Op::Scan { u, delta, a, b, c, d, states } => {
                let us = self.shape(*u);
                let (bn, tn, en) = (us[0], us[1], us[2]);
                let nn = self.shape(*a)[1];
                let ud = self.value(*u).data();
                let dd = self.value(*delta).data();
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                let cd = self.value(*c).data();
                let skip = self.value(*d).data();
                let mut gu = vec![S::zero(); ud.len()];
                let mut gdelta = vec![S::zero(); dd.len()];
                let mut ga = vec![S::zero(); ad.len()];
                let mut gbm = vec![S::zero(); bd.len()];
                let mut gcm = vec![S::zero(); cd.len()];
                let mut gd = vec![S::zero(); skip.len()];
                // gradient flowing into h_t from later steps, per (e, n)
                let mut carry = vec![S::zero(); en * nn];
                for bi in 0..bn {
                    carry.iter_mut().for_each(|v| *v = S::zero());
                    for t in (0..tn).rev() {
                        let row = bi * tn + t;
                        for e in 0..en {
                            let gyv = gy[row * en + e];
                            let ut = ud[row * en + e];
                            let dt = dd[row * en + e];
                            gd[e] += gyv * ut;
                            gu[row * en + e] += gyv * skip[e];
                            for n in 0..nn {
                                let h = states[(row * en + e) * nn + n];
                                let prev = if t == 0 { S::zero() } else { states[((row - 1) * en + e) * nn + n] };
                                gcm[row * nn + n] += gyv * h;
                                let gh = cd[row * nn + n] * gyv + carry[e * nn + n];
                                let av = ad[e * nn + n];
                                let decay = (dt * av).exp();
                                // through the decay term exp(Δ·A)·h_{t-1}
                                let g_decay = gh * prev * decay;
                                gdelta[row * en + e] += g_decay * av;
                                ga[e * nn + n] += g_decay * dt;
                                // through the input term Δ·B·u
                                let bv = bd[row * nn + n];
                                gdelta[row * en + e] += gh * bv * ut;
                                gbm[row * nn + n] += gh * dt * ut;
                                gu[row * en + e] += gh * dt * bv;
                                carry[e * nn + n] = gh * decay;
                            }
                        }
                    }
                }
                self.accumulate(grads, *u, gu);
                self.accumulate(grads, *delta, gdelta);
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gbm);
                self.accumulate(grads, *c, gcm);
                self.accumulate(grads, *d, gd);
            }
        }
    }
}

struct MatMulGeometry {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_bs: usize,
    b_bs: usize,
    out_shape: Vec<usize>,
}

impl MatMulGeometry {
    fn new(sa: &[usize], sb: &[usize]) -> Result<Self> {
        let err = || NumError::shape("matmul", format!("{sa:?} x {sb:?}"));
        if sa.len() < 2 || sb.len() < 2 {
            return Err(err());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (k2, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if k != k2 {
            return Err(err());
        }
        let ba = &sa[..sa.len() - 2];
        let bb = &sb[..sb.len() - 2];
        let batch_dims = match (ba.is_empty(), bb.is_empty()) {
            (_, true) => ba.to_vec(),
            (true, false) => bb.to_vec(),
            (false, false) if ba == bb => ba.to_vec(),
            _ => return Err(err()),
        };
        let batch = numel(&batch_dims);
        let mut out_shape = batch_dims;
        out_shape.extend([m, n]);
        Ok(Self {
            batch,
            m,
            k,
            n,
            a_bs: if ba.is_empty() { 0 } else { m * k },
            b_bs: if bb.is_empty() { 0 } else { k * n },
            out_shape,
        })
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a node, `None` if it does not require gradients or was
    /// not reached from the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for `vars`, with zeros for unreached nodes.
    pub fn collect(&self, graph: &Graph<S>, vars: &[Var]) -> Vec<Tensor<S>> {
        vars.iter()
            .map(|&v| {
                self.get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(graph.shape(v).to_vec()))
            })
            .collect()
    }
}
