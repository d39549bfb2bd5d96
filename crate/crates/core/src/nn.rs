//! Transformer building blocks on top of the tape: scaled dot-product
//! attention, multi-head attention, the position-wise MLP, the residual
//! sublayer wrapper and sinusoidal position codes.
//!
//! Parameter structs here hold [`Var`] handles already bound to a tape;
//! see [`crate::model`] for how they are created from named tensors.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Affine map `x · weight + bias` applied row-wise.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = tape.matmul(x, self.weight)?;
        tape.add_bias(y, self.bias)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LayerNormParams {
    pub gain: Var,
    pub bias: Var,
}

impl LayerNormParams {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.layer_norm(x, self.gain, self.bias, LAYER_NORM_EPS)
    }
}

/// Row-stochastic attention weights `softmax(Q Kᵀ / √d)` where `d` is the
/// query width. `key_mask` marks valid key rows.
pub fn attention_weights(tape: &mut Tape, q: Var, k: Var, key_mask: Option<&[bool]>) -> Result<Var> {
    let qs = tape.shape(q).to_vec();
    let ks = tape.shape(k).to_vec();
    if qs.len() != 2 || ks.len() != 2 || qs[1] != ks[1] {
        return Err(Error::shape("attention(Q, K)", &qs, &ks));
    }
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (qs[1] as f64).sqrt());
    tape.softmax(scaled, 1, key_mask)
}

/// `softmax(Q Kᵀ / √d) C`. Every output row is a convex combination of the
/// valid rows of `C`.
pub fn attention(tape: &mut Tape, q: Var, k: Var, c: Var, key_mask: Option<&[bool]>) -> Result<Var> {
    if tape.shape(k)[0] != tape.shape(c)[0] {
        return Err(Error::shape("attention(K, C)", tape.shape(k), tape.shape(c)));
    }
    let weights = attention_weights(tape, q, k, key_mask)?;
    tape.matmul(weights, c)
}

/// Multi-head attention. Each projection is one `k×k` matrix whose column
/// block `i` (width `k / heads`) is the per-head projection of head `i`.
#[derive(Clone, Copy, Debug)]
pub struct MhaParams {
    pub query: Linear,
    pub key: Linear,
    pub context: Linear,
    pub output: Linear,
    pub heads: usize,
    pub width: usize,
}

impl MhaParams {
    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }

    pub fn forward(&self, tape: &mut Tape, q: Var, k: Var, c: Var, key_mask: Option<&[bool]>) -> Result<Var> {
        if self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "width {} is not divisible by {} heads",
                self.width, self.heads
            )));
        }
        for v in [q, k, c] {
            if tape.value(v).cols() != self.width {
                return Err(Error::shape("multi_head_attention", tape.shape(v), &[self.width]));
            }
        }
        let qp = self.query.forward(tape, q)?;
        let kp = self.key.forward(tape, k)?;
        let cp = self.context.forward(tape, c)?;
        let d = self.head_width();
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * d, (h + 1) * d);
            let qh = tape.slice_last(qp, lo, hi)?;
            let kh = tape.slice_last(kp, lo, hi)?;
            let ch = tape.slice_last(cp, lo, hi)?;
            heads.push(attention(tape, qh, kh, ch, key_mask)?);
        }
        let joined = if heads.len() == 1 { heads[0] } else { tape.concat_last(&heads)? };
        self.output.forward(tape, joined)
    }
}

/// Position-wise feed-forward network `relu(x W1 + b1) W2 + b2`.
#[derive(Clone, Copy, Debug)]
pub struct MlpParams {
    pub hidden: Linear,
    pub output: Linear,
}

impl MlpParams {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h);
        self.output.forward(tape, h)
    }
}

/// `LayerNorm(x + Dropout(f(x)))`; `f` must preserve the shape of `x`.
pub fn sublayer<F>(tape: &mut Tape, x: Var, f: F, norm: &LayerNormParams, dropout: f64) -> Result<Var>
where
    F: FnOnce(&mut Tape, Var) -> Result<Var>,
{
    let y = f(tape, x)?;
    if tape.shape(y) != tape.shape(x) {
        return Err(Error::Contract(format!(
            "sublayer changed shape {:?} -> {:?}",
            tape.shape(x),
            tape.shape(y)
        )));
    }
    let y = tape.dropout(y, dropout)?;
    let sum = tape.add(x, y)?;
    norm.forward(tape, sum)
}

/// Sinusoidal position codes: even columns `sin(pos / 10000^(2i/k))`, odd
/// columns the matching cosine.
pub fn positional_encoding(n: usize, k: usize) -> Result<Tensor> {
    if n == 0 || k == 0 {
        return Err(Error::Contract(format!("positional encoding needs n, k >= 1, got {n}x{k}")));
    }
    let mut data = vec![0.0; n * k];
    for pos in 0..n {
        for j in 0..k {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / k as f64);
            data[pos * k + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::matrix(n, k, data)
}
