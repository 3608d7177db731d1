//! Patch embedding, sinusoidal positional encoding, scaled dot-product and
//! multi-head attention, and the pre-norm encoder block.
//!
//! Tokens are rows, so attention logits are `Q·Kᵀ`.

use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub n_heads: usize,
}

impl AttentionConfig {
    pub fn new(d_model: usize, n_heads: usize) -> Result<Self, TensorError> {
        if d_model == 0 || n_heads == 0 || !d_model.is_multiple_of(n_heads) {
            return Err(TensorError::Contract("n_heads must divide d_model"));
        }
        Ok(Self { d_model, n_heads })
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Shape of one encoder block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<AttentionConfig, TensorError> {
        let att = AttentionConfig::new(self.d_model, self.n_heads)?;
        if self.d_ff < self.d_model {
            return Err(TensorError::Contract("d_ff must be at least d_model"));
        }
        Ok(att)
    }
}

/// Weights of one encoder block, generic over storage so the same layout
/// serves plain tensors and tape handles.
///
/// The per-head `Q`, `K`, `V` projections are packed column-wise: head `h`
/// owns columns `h·d_head .. (h+1)·d_head` of `w_q`, `w_k` and `w_v`. They
/// carry no bias; the output projection does.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams<T> {
    pub ln1_gain: T,
    pub ln1_bias: T,
    pub w_q: T,
    pub w_k: T,
    pub w_v: T,
    pub w_o: T,
    pub b_o: T,
    pub ln2_gain: T,
    pub ln2_bias: T,
    pub ff1_w: T,
    pub ff1_b: T,
    pub ff2_w: T,
    pub ff2_b: T,
}

impl<T> BlockParams<T> {
    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> BlockParams<U> {
        BlockParams {
            ln1_gain: f(&self.ln1_gain),
            ln1_bias: f(&self.ln1_bias),
            w_q: f(&self.w_q),
            w_k: f(&self.w_k),
            w_v: f(&self.w_v),
            w_o: f(&self.w_o),
            b_o: f(&self.b_o),
            ln2_gain: f(&self.ln2_gain),
            ln2_bias: f(&self.ln2_bias),
            ff1_w: f(&self.ff1_w),
            ff1_b: f(&self.ff1_b),
            ff2_w: f(&self.ff2_w),
            ff2_b: f(&self.ff2_b),
        }
    }

    /// Fields in serialization order.
    pub fn fields(&self) -> [&T; 13] {
        [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.w_o,
            &self.b_o,
            &self.ln2_gain,
            &self.ln2_bias,
            &self.ff1_w,
            &self.ff1_b,
            &self.ff2_w,
            &self.ff2_b,
        ]
    }

    pub fn fields_mut(&mut self) -> [&mut T; 13] {
        [
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
            &mut self.ff1_w,
            &mut self.ff1_b,
            &mut self.ff2_w,
            &mut self.ff2_b,
        ]
    }
}

impl BlockParams<Tensor> {
    /// Expected shapes in field order.
    pub fn shapes(cfg: &BlockConfig) -> [Vec<usize>; 13] {
        let d = cfg.d_model;
        let f = cfg.d_ff;
        [
            vec![d],
            vec![d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d, d],
            vec![d],
            vec![d],
            vec![d],
            vec![d, f],
            vec![f],
            vec![f, d],
            vec![d],
        ]
    }

    /// Xavier-uniform matrices, unit norm gains, zero biases.
    pub fn init(cfg: &BlockConfig, rng: &mut SplitMix64) -> Self {
        let d = cfg.d_model;
        let f = cfg.d_ff;
        BlockParams {
            ln1_gain: Tensor::full(&[d], 1.0),
            ln1_bias: Tensor::zeros(&[d]),
            w_q: xavier(d, d, rng),
            w_k: xavier(d, d, rng),
            w_v: xavier(d, d, rng),
            w_o: xavier(d, d, rng),
            b_o: Tensor::zeros(&[d]),
            ln2_gain: Tensor::full(&[d], 1.0),
            ln2_bias: Tensor::zeros(&[d]),
            ff1_w: xavier(d, f, rng),
            ff1_b: Tensor::zeros(&[f]),
            ff2_w: xavier(f, d, rng),
            ff2_b: Tensor::zeros(&[d]),
        }
    }

    pub fn zeros(cfg: &BlockConfig) -> Self {
        let shapes = Self::shapes(cfg);
        let mut it = shapes.iter().map(|s| Tensor::zeros(s));
        let mut next = || it.next().expect("13 shapes");
        BlockParams {
            ln1_gain: next(),
            ln1_bias: next(),
            w_q: next(),
            w_k: next(),
            w_v: next(),
            w_o: next(),
            b_o: next(),
            ln2_gain: next(),
            ln2_bias: next(),
            ff1_w: next(),
            ff1_b: next(),
            ff2_w: next(),
            ff2_b: next(),
        }
    }
}

pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.uniform(-limit, limit)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("xavier shape")
}

/// Token rows plus the original patch index of each row.
#[derive(Clone, Debug)]
pub struct TokenSequence {
    pub tokens: Var,
    pub positions: Vec<usize>,
}

/// `tokens = patches · projection`, positions `0..n`.
pub fn patch_embed(tape: &mut Tape, patches: Var, projection: Var) -> Result<TokenSequence, TensorError> {
    let tokens = tape.matmul(patches, projection)?;
    let n = tape.value(tokens).rows();
    Ok(TokenSequence { tokens, positions: (0..n).collect() })
}

fn pe_angle(pos: usize, pair: usize, d_model: usize) -> f64 {
    pos as f64 / 10000f64.powf((2 * pair) as f64 / d_model as f64)
}

/// Sinusoidal encoding rows for `0..n_positions`.
pub fn positional_encoding(n_positions: usize, d_model: usize) -> Result<Tensor, TensorError> {
    let positions: Vec<usize> = (0..n_positions).collect();
    positional_rows(&positions, d_model)
}

/// Sinusoidal encoding rows for an arbitrary list of positions:
/// `PE[pos, 2i] = sin(pos / 10000^(2i/d))`, `PE[pos, 2i+1] = cos(..)`.
pub fn positional_rows(positions: &[usize], d_model: usize) -> Result<Tensor, TensorError> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(TensorError::Contract("positional encoding needs an even d_model"));
    }
    let mut data = Vec::with_capacity(positions.len() * d_model);
    for &pos in positions {
        for pair in 0..d_model / 2 {
            let a = pe_angle(pos, pair, d_model);
            data.push(a.sin());
            data.push(a.cos());
        }
    }
    Tensor::new(vec![positions.len(), d_model], data)
}

/// Adds the positional rows for `seq.positions` to its tokens.
pub fn add_positional(tape: &mut Tape, seq: &TokenSequence) -> Result<TokenSequence, TensorError> {
    let d = tape.value(seq.tokens).cols();
    let pe = tape.constant(positional_rows(&seq.positions, d)?);
    let tokens = tape.add(seq.tokens, pe)?;
    Ok(TokenSequence { tokens, positions: seq.positions.clone() })
}

/// `softmax(Q·Kᵀ / sqrt(d)) · V`. Returns the output and the attention map.
pub fn scaled_attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<(Var, Var), TensorError> {
    let d = tape.value(q).cols();
    if tape.value(k).rows() != tape.value(v).rows() {
        return Err(TensorError::shape("scaled_attention", tape.value(k).shape(), tape.value(v).shape()));
    }
    let logits = tape.matmul_bt(q, k)?;
    let scaled = tape.scale(logits, 1.0 / (d as f64).sqrt());
    let attn = tape.softmax_rows(scaled)?;
    let out = tape.matmul(attn, v)?;
    Ok((out, attn))
}

pub struct AttentionOutput {
    pub output: Var,
    /// One `n×n` map per head.
    pub maps: Vec<Var>,
}

pub fn multi_head_attention(
    tape: &mut Tape,
    x: Var,
    params: &BlockParams<Var>,
    cfg: AttentionConfig,
) -> Result<AttentionOutput, TensorError> {
    let (_, cols) = tape.value(x).dims2("multi_head_attention")?;
    if cols != cfg.d_model || tape.value(params.w_q).shape() != [cfg.d_model, cfg.d_model] {
        return Err(TensorError::shape("multi_head_attention", tape.value(x).shape(), tape.value(params.w_q).shape()));
    }
    let q = tape.matmul(x, params.w_q)?;
    let k = tape.matmul(x, params.w_k)?;
    let v = tape.matmul(x, params.w_v)?;
    let dh = cfg.d_head();
    let mut heads = Vec::with_capacity(cfg.n_heads);
    let mut maps = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let (qh, kh, vh) = if cfg.n_heads == 1 {
            (q, k, v)
        } else {
            (tape.slice_cols(q, h * dh, dh)?, tape.slice_cols(k, h * dh, dh)?, tape.slice_cols(v, h * dh, dh)?)
        };
        let (out, attn) = scaled_attention(tape, qh, kh, vh)?;
        heads.push(out);
        maps.push(attn);
    }
    let concat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads)? };
    let projected = tape.matmul(concat, params.w_o)?;
    let output = tape.add_row(projected, params.b_o)?;
    Ok(AttentionOutput { output, maps })
}

/// `linear → gelu → linear`.
pub fn feed_forward(tape: &mut Tape, x: Var, params: &BlockParams<Var>) -> Result<Var, TensorError> {
    let h = tape.matmul(x, params.ff1_w)?;
    let h = tape.add_row(h, params.ff1_b)?;
    let h = tape.gelu(h);
    let o = tape.matmul(h, params.ff2_w)?;
    tape.add_row(o, params.ff2_b)
}

/// Pre-norm block: `x' = x + MHA(LN(x))`, `out = x' + FFN(LN(x'))`.
pub fn encoder_block(
    tape: &mut Tape,
    x: &TokenSequence,
    params: &BlockParams<Var>,
    cfg: AttentionConfig,
) -> Result<TokenSequence, TensorError> {
    let n1 = tape.layer_norm(x.tokens, params.ln1_gain, params.ln1_bias, LN_EPS)?;
    let att = multi_head_attention(tape, n1, params, cfg)?;
    let x1 = tape.add(x.tokens, att.output)?;
    let n2 = tape.layer_norm(x1, params.ln2_gain, params.ln2_bias, LN_EPS)?;
    let ff = feed_forward(tape, n2, params)?;
    let out = tape.add(x1, ff)?;
    Ok(TokenSequence { tokens: out, positions: x.positions.clone() })
}
