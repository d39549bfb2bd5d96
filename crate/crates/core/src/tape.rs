//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every primitive as it executes. Values live on the
//! tape and are addressed by [`Var`] handles; [`Tape::backward`] walks the
//! record in exact reverse order and accumulates gradients into every node
//! that (transitively) depends on a `requires_grad` leaf.
//!
//! ```
//! use tbje_core::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap().data(), &[2.0, 4.0, 6.0]);
//! ```

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{self, Rng, StreamKind};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Mul(Var, Var),
    Transpose(Var),
    ConcatLast(Vec<Var>),
    ConcatFirst(Vec<Var>),
    SliceLast { input: Var, start: usize },
    Sum(Var),
    Mean(Var),
    Softmax { input: Var, axis: usize },
    LogSoftmax { input: Var, axis: usize },
    LayerNorm(Box<LayerNormSaved>),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    LogSigmoid(Var),
    Dropout { input: Var, mask: Vec<f64> },
}

#[derive(Debug)]
struct LayerNormSaved {
    input: Var,
    gain: Var,
    bias: Var,
    normalized: Vec<f64>,
    inv_std: Vec<f64>,
    clamped: Vec<bool>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Record of executed primitives plus the gradients produced by `backward`.
///
/// A tape is either in training mode (dropout active, drawing from its own
/// seeded stream) or evaluation mode (dropout is the identity).
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
    training: bool,
    rng: Rng,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// An evaluation-mode tape.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            training: false,
            rng: rng::stream(0, StreamKind::Dropout, 0),
        }
    }

    /// A training-mode tape whose dropout masks come from `rng`.
    pub fn training(rng: Rng) -> Self {
        Self {
            training: true,
            rng,
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops every recorded node and gradient buffer.
    pub fn clear(&mut self) {
        self.nodes = Vec::new();
        self.grads = Vec::new();
        self.backward_done = false;
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last `backward` loss with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape(v) {
            [r, c] => Ok((r, c)),
            ref s => Err(Error::Contract(format!("{op} expects a matrix, got {s:?}"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 {
            return Err(Error::shape("matmul", self.shape(a), self.shape(b)));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a vector `bias` to every last-axis row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = self.value(x).cols();
        if self.shape(bias) != [c] {
            return Err(Error::shape("add_bias", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data().to_vec();
        let mut t = self.value(x).clone();
        for row in t.data_mut().chunks_exact_mut(c) {
            for (v, bj) in row.iter_mut().zip(&b) {
                *v += bj;
            }
        }
        Ok(self.push(t, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let mut t = self.value(x).clone();
        t.data_mut().iter_mut().for_each(|v| *v *= factor);
        self.push(t, Op::Scale(x, factor), &[x])
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).transposed()?;
        Ok(self.push(t, Op::Transpose(x), &[x]))
    }

    /// Concatenation along the last axis; leading extents must agree.
    pub fn concat_last(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat_last", self.shape(first), s));
            }
            total += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let mut shape = lead;
        shape.push(total);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::ConcatLast(parts.to_vec()), parts))
    }

    /// Concatenation along the first axis; trailing extents must agree.
    pub fn concat_first(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let trail = self.shape(first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != trail[..] {
                return Err(Error::shape("concat_first", self.shape(first), s));
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend(trail);
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::ConcatFirst(parts.to_vec()), parts))
    }

    /// Columns `start..end` of the last axis.
    pub fn slice_last(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let c = self.value(x).cols();
        if start >= end || end > c {
            return Err(Error::Contract(format!(
                "slice {start}..{end} out of range for last extent {c}"
            )));
        }
        let mut shape = self.shape(x).to_vec();
        *shape.last_mut().expect("rank >= 1") = end - start;
        let v = self.value(x);
        let data = (0..v.rows())
            .flat_map(|r| v.row(r)[start..end].iter().copied())
            .collect();
        let t = Tensor::new(shape, data)?;
        Ok(self.push(t, Op::SliceLast { input: x, start }, &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Softmax along `axis`. With a mask (one flag per position on `axis`,
    /// `true` = valid), masked positions receive exactly zero weight.
    pub fn softmax(&mut self, x: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var> {
        let t = softmax_forward(self.value(x), axis, mask, false)?;
        Ok(self.push(t, Op::Softmax { input: x, axis }, &[x]))
    }

    pub fn log_softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = softmax_forward(self.value(x), axis, None, true)?;
        Ok(self.push(t, Op::LogSoftmax { input: x, axis }, &[x]))
    }

    /// Layer normalisation over the last axis followed by `gain * x + bias`.
    ///
    /// Rows are divided by `sqrt(max(var, eps))`: rows whose variance
    /// exceeds `eps` come out exactly standardised, near-constant rows are
    /// divided by `sqrt(eps)` instead of blowing up.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let c = self.value(x).cols();
        if self.shape(gain) != [c] || self.shape(bias) != [c] {
            return Err(Error::shape("layer_norm", self.shape(x), self.shape(gain)));
        }
        let xv = self.value(x);
        let rows = xv.rows();
        let mut normalized = Vec::with_capacity(xv.len());
        let mut inv_std = Vec::with_capacity(rows);
        let mut clamped = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / var.max(eps).sqrt();
            inv_std.push(inv);
            clamped.push(var <= eps);
            normalized.extend(row.iter().map(|v| (v - mean) * inv));
        }
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let out = normalized
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((n, g), b)| n * g + b))
            .collect();
        let t = Tensor::new(xv.shape().to_vec(), out)?;
        let saved = LayerNormSaved {
            input: x,
            gain,
            bias,
            normalized,
            inv_std,
            clamped,
        };
        Ok(self.push(t, Op::LayerNorm(Box::new(saved)), &[x, gain, bias]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = map(self.value(x), |v| v.max(0.0));
        self.push(t, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = map(self.value(x), sigmoid);
        self.push(t, Op::Sigmoid(x), &[x])
    }

    /// Natural log; every input must be strictly positive.
    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(bad) = self.value(x).data().iter().find(|v| !(**v > 0.0)) {
            return Err(Error::Numeric(format!("log of non-positive value {bad}")));
        }
        let t = map(self.value(x), f64::ln);
        Ok(self.push(t, Op::Log(x), &[x]))
    }

    /// `ln(sigmoid(x))`, evaluated without overflow for large `|x|`.
    pub fn log_sigmoid(&mut self, x: Var) -> Var {
        let t = map(self.value(x), |v| v.min(0.0) - (-v.abs()).exp().ln_1p());
        self.push(t, Op::LogSigmoid(x), &[x])
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`. In
    /// evaluation mode (or with `p == 0`) the input handle is returned as is.
    pub fn dropout(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Contract(format!("dropout rate {p} outside [0, 1)")));
        }
        if !self.training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let xv = self.value(x);
        let data = xv.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout { input: x, mask }, &[x]))
    }

    /// Back-propagates from the scalar `loss`.
    ///
    /// Fails on a non-scalar loss and when called twice on the same record;
    /// run a fresh forward pass (after [`Tape::clear`]) first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract(
                "backward already ran on this tape; record a new forward pass first".into(),
            ));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract("loss is not recorded on this tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        self.backward_done = true;
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Tensor::full(self.shape(loss).to_vec(), 1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g)?;
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => g.data_mut().iter_mut().zip(delta).for_each(|(a, d)| *a += d),
            slot @ None => {
                let shape = self.nodes[v.0].value.shape().to_vec();
                *slot = Some(Tensor::new(shape, delta).expect("gradient matches value shape"));
            }
        }
    }

    fn propagate(&mut self, i: usize, g: &Tensor) -> Result<()> {
        let gd = g.data();
        let node = &self.nodes[i];
        let out = node.value.data();
        // Gradient contributions are computed while `self.nodes` is borrowed
        // and applied afterwards.
        let mut updates: Vec<(Var, Vec<f64>)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let av = &self.nodes[a.0].value;
                let bv = &self.nodes[b.0].value;
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.nodes[a.0].requires_grad {
                    let bt = bv.transposed()?;
                    updates.push((*a, matmul_raw(gd, bt.data(), m, n, k)));
                }
                if self.nodes[b.0].requires_grad {
                    let at = av.transposed()?;
                    updates.push((*b, matmul_raw(at.data(), gd, k, m, n)));
                }
            }
            Op::Add(a, b) => {
                updates.push((*a, gd.to_vec()));
                updates.push((*b, gd.to_vec()));
            }
            Op::Sub(a, b) => {
                updates.push((*a, gd.to_vec()));
                updates.push((*b, gd.iter().map(|v| -v).collect()));
            }
            Op::AddBias(x, b) => {
                let c = g.cols();
                let mut db = vec![0.0; c];
                for row in gd.chunks_exact(c) {
                    db.iter_mut().zip(row).for_each(|(d, r)| *d += r);
                }
                updates.push((*x, gd.to_vec()));
                updates.push((*b, db));
            }
            Op::Scale(x, f) => updates.push((*x, gd.iter().map(|v| v * f).collect())),
            Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.data();
                let bv = self.nodes[b.0].value.data();
                updates.push((*a, gd.iter().zip(bv).map(|(g, b)| g * b).collect()));
                updates.push((*b, gd.iter().zip(av).map(|(g, a)| g * a).collect()));
            }
            Op::Transpose(x) => updates.push((*x, g.transposed()?.into_data())),
            Op::ConcatLast(parts) => {
                let total = g.cols();
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.nodes[p.0].value.cols();
                    let delta = (0..rows)
                        .flat_map(|r| gd[r * total + offset..r * total + offset + w].iter().copied())
                        .collect();
                    updates.push((*p, delta));
                    offset += w;
                }
            }
            Op::ConcatFirst(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.len();
                    updates.push((*p, gd[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::SliceLast { input, start } => {
                let src = &self.nodes[input.0].value;
                let c = src.cols();
                let w = g.cols();
                let mut delta = vec![0.0; src.len()];
                for r in 0..src.rows() {
                    delta[r * c + start..r * c + start + w].copy_from_slice(&gd[r * w..(r + 1) * w]);
                }
                updates.push((*input, delta));
            }
            Op::Sum(x) => {
                let n = self.nodes[x.0].value.len();
                updates.push((*x, vec![gd[0]; n]));
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].value.len();
                updates.push((*x, vec![gd[0] / n as f64; n]));
            }
            Op::Softmax { input, axis } => {
                let shape = node.value.shape();
                let mut delta = vec![0.0; out.len()];
                for_each_lane(shape, *axis, |idx| {
                    let dot: f64 = idx.clone().map(|j| out[j] * gd[j]).sum();
                    for j in idx {
                        delta[j] = out[j] * (gd[j] - dot);
                    }
                });
                updates.push((*input, delta));
            }
            Op::LogSoftmax { input, axis } => {
                let shape = node.value.shape();
                let mut delta = vec![0.0; out.len()];
                for_each_lane(shape, *axis, |idx| {
                    let total: f64 = idx.clone().map(|j| gd[j]).sum();
                    for j in idx {
                        delta[j] = gd[j] - out[j].exp() * total;
                    }
                });
                updates.push((*input, delta));
            }
            Op::LayerNorm(saved) => {
                let c = g.cols();
                let gain = self.nodes[saved.gain.0].value.data();
                let mut dx = vec![0.0; gd.len()];
                let mut dgain = vec![0.0; c];
                let mut dbias = vec![0.0; c];
                for r in 0..g.rows() {
                    let gy = &gd[r * c..(r + 1) * c];
                    let xh = &saved.normalized[r * c..(r + 1) * c];
                    let dxh: Vec<f64> = gy.iter().zip(gain).map(|(g, w)| g * w).collect();
                    for j in 0..c {
                        dgain[j] += gy[j] * xh[j];
                        dbias[j] += gy[j];
                    }
                    let mean_dxh = dxh.iter().sum::<f64>() / c as f64;
                    let mean_dxh_xh = if saved.clamped[r] {
                        0.0
                    } else {
                        dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / c as f64
                    };
                    let inv = saved.inv_std[r];
                    for j in 0..c {
                        dx[r * c + j] = inv * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
                    }
                }
                updates.push((saved.input, dx));
                updates.push((saved.gain, dgain));
                updates.push((saved.bias, dbias));
            }
            Op::Relu(x) => {
                let xv = self.nodes[x.0].value.data();
                updates.push((*x, gd.iter().zip(xv).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect()));
            }
            Op::Sigmoid(x) => {
                updates.push((*x, gd.iter().zip(out).map(|(g, y)| g * y * (1.0 - y)).collect()));
            }
            Op::Log(x) => {
                let xv = self.nodes[x.0].value.data();
                updates.push((*x, gd.iter().zip(xv).map(|(g, v)| g / v).collect()));
            }
            Op::LogSigmoid(x) => {
                let xv = self.nodes[x.0].value.data();
                updates.push((*x, gd.iter().zip(xv).map(|(g, v)| g * sigmoid(-v)).collect()));
            }
            Op::Dropout { input, mask } => {
                updates.push((*input, gd.iter().zip(mask).map(|(g, m)| g * m).collect()));
            }
        }
        for (v, delta) in updates {
            self.accumulate(v, delta);
        }
        Ok(())
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
        .expect("same shape")
}

/// `a[m×k] · b[k×n]` on raw row-major buffers.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// Calls `f` once per 1-D lane along `axis` with the flat indices of that lane.
fn for_each_lane(
    shape: &[usize],
    axis: usize,
    mut f: impl FnMut(std::iter::StepBy<std::ops::Range<usize>>),
) {
    let n = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    for o in 0..outer {
        for i in 0..inner {
            let start = o * n * inner + i;
            f((start..start + n * inner).step_by(inner));
        }
    }
}

fn softmax_forward(x: &Tensor, axis: usize, mask: Option<&[bool]>, log: bool) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::Contract(format!("softmax axis {axis} out of range for {shape:?}")));
    }
    if let Some(m) = mask {
        if m.len() != shape[axis] {
            return Err(Error::shape("softmax mask", shape, &[m.len()]));
        }
        if !m.iter().any(|&v| v) {
            return Err(Error::Contract("softmax over a fully masked axis".into()));
        }
    }
    let valid = |pos: usize| mask.is_none_or(|m| m[pos]);
    let xd = x.data();
    let mut out = vec![0.0; xd.len()];
    let mut failure = None;
    for_each_lane(shape, axis, |idx| {
        let lane: Vec<usize> = idx.collect();
        let mut max = f64::NEG_INFINITY;
        for (pos, &j) in lane.iter().enumerate() {
            if valid(pos) {
                if !xd[j].is_finite() {
                    failure = Some(xd[j]);
                }
                max = max.max(xd[j]);
            }
        }
        let mut total = 0.0;
        for (pos, &j) in lane.iter().enumerate() {
            if valid(pos) {
                let e = (xd[j] - max).exp();
                out[j] = e;
                total += e;
            }
        }
        let log_total = total.ln();
        for (pos, &j) in lane.iter().enumerate() {
            if valid(pos) {
                out[j] = if log { xd[j] - max - log_total } else { out[j] / total };
            }
        }
    });
    if let Some(v) = failure {
        return Err(Error::Numeric(format!("softmax input {v} is not finite")));
    }
    Tensor::new(shape.to_vec(), out)
}
