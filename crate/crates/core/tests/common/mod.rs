#![allow(dead_code)]

pub mod cases;
pub mod grad_suite;
pub mod oracle;

use tmae::autodiff::{Tape, Var};
use tmae::rng::SplitMix64;
use tmae::Tensor;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Relative error is `|analytic − numeric| / max(|analytic|, |numeric|, FD_FLOOR)`.
/// The floor keeps rounding noise on near-zero gradients from dominating.
pub const FD_FLOOR: f64 = 1e-3;

pub fn random(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

pub fn random_in(shape: &[usize], lo: f64, hi: f64, rng: &mut SplitMix64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
}

fn eval(inputs: &[Tensor], f: &impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    tape.value(loss).data()[0]
}

/// Largest relative error between the tape gradient and a central
/// finite difference, over every element of every input.
pub fn max_grad_error(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&mut tape, &vars);
    let grads = tape.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        // Inputs the loss never touches have no gradient entry: zero.
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= FD_STEP;
            let numeric = (eval(&plus, &f) - eval(&minus, &f)) / (2.0 * FD_STEP);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// Weighted sum `Σ w ⊙ x` with fixed pseudo-random weights, so every
/// output element contributes a distinct amount to the scalar loss.
pub fn weighted_sum(tape: &mut Tape, x: Var, seed: u64) -> Var {
    let shape = tape.value(x).shape().to_vec();
    let mut rng = SplitMix64::new(seed);
    let w = tape.constant(random(&shape, &mut rng));
    let p = tape.mul(x, w).unwrap();
    tape.sum(p)
}

pub mod block {
    use tmae::autodiff::Tape;
    use tmae::rng::SplitMix64;
    use tmae::transformer::{
        add_positional, encoder_block, multi_head_attention, AttentionConfig, BlockConfig, BlockParams, TokenSequence,
    };
    use tmae::Tensor;

    pub fn params(cfg: &BlockConfig, seed: u64) -> BlockParams<Tensor> {
        let mut rng = SplitMix64::new(seed);
        let mut p = BlockParams::init(cfg, &mut rng);
        for t in p.fields_mut() {
            for v in t.data_mut() {
                *v += rng.uniform(-0.2, 0.2);
            }
        }
        p
    }

    /// One encoder block over `x`, optionally with positional encoding added first.
    pub fn run(x: &Tensor, p: &BlockParams<Tensor>, heads: usize, with_pe: bool) -> Tensor {
        let mut tape = Tape::new();
        let pv = p.map(&mut |t: &Tensor| tape.constant(t.clone()));
        let tokens = tape.constant(x.clone());
        let mut seq = TokenSequence { tokens, positions: (0..x.rows()).collect() };
        if with_pe {
            seq = add_positional(&mut tape, &seq).unwrap();
        }
        let att = AttentionConfig::new(x.cols(), heads).unwrap();
        let out = encoder_block(&mut tape, &seq, &pv, att).unwrap();
        tape.value(out.tokens).clone()
    }

    /// Per-head attention maps of `x`.
    pub fn maps(x: &Tensor, p: &BlockParams<Tensor>, heads: usize) -> Vec<Tensor> {
        let mut tape = Tape::new();
        let pv = p.map(&mut |t: &Tensor| tape.constant(t.clone()));
        let xv = tape.constant(x.clone());
        let att = AttentionConfig::new(x.cols(), heads).unwrap();
        let out = multi_head_attention(&mut tape, xv, &pv, att).unwrap();
        out.maps.iter().map(|&m| tape.value(m).clone()).collect()
    }

    pub fn permute_rows(x: &Tensor, perm: &[usize]) -> Tensor {
        let data = perm.iter().flat_map(|&i| x.row(i).to_vec()).collect();
        Tensor::new(x.shape().to_vec(), data).unwrap()
    }

    /// Largest deviation from `f(π·x) = π·f(x)` over one block.
    pub fn equivariance_gap(x: &Tensor, p: &BlockParams<Tensor>, heads: usize, perm: &[usize], with_pe: bool) -> f64 {
        let direct = permute_rows(&run(x, p, heads, with_pe), perm);
        let permuted = run(&permute_rows(x, perm), p, heads, with_pe);
        direct.max_abs_diff(&permuted)
    }
}
