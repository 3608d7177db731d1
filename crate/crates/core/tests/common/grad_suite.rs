//! Finite-difference cases for every tape op and for the composed
//! transformer and TMAE graphs.

use super::{max_grad_error, random, random_in, weighted_sum};
use tmae::autodiff::{Tape, Var};
use tmae::masking::MaskSpec;
use tmae::rng::SplitMix64;
use tmae::tmae::{decode_full, encode_visible, masked_mse, StackConfig};
use tmae::transformer::{
    encoder_block, feed_forward, multi_head_attention, AttentionConfig, BlockConfig, BlockParams, TokenSequence, LN_EPS,
};
use tmae::{Tensor, Tmae, TmaeConfig};

/// `(case, max relative error)` pairs.
pub type Report = Vec<(&'static str, f64)>;

fn check(out: &mut Report, name: &'static str, inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> Var) {
    out.push((name, max_grad_error(inputs, f)));
}

fn rng() -> SplitMix64 {
    SplitMix64::new(0xD1FF)
}

pub fn matmul_family(out: &mut Report) {
    let mut r = rng();
    let (a, b, c) = (random(&[3, 4], &mut r), random(&[4, 2], &mut r), random(&[5, 4], &mut r));
    check(out, "matmul", &[a.clone(), b], |t, v| {
        let y = t.matmul(v[0], v[1]).unwrap();
        weighted_sum(t, y, 1)
    });
    check(out, "matmul_bt", &[a, c], |t, v| {
        let y = t.matmul_bt(v[0], v[1]).unwrap();
        weighted_sum(t, y, 2)
    });
}

pub fn elementwise_ops(out: &mut Report) {
    let mut r = rng();
    let (a, b) = (random(&[3, 4], &mut r), random(&[3, 4], &mut r));
    check(out, "add", &[a.clone(), b.clone()], |t, v| {
        let y = t.add(v[0], v[1]).unwrap();
        weighted_sum(t, y, 3)
    });
    check(out, "sub", &[a.clone(), b.clone()], |t, v| {
        let y = t.sub(v[0], v[1]).unwrap();
        weighted_sum(t, y, 4)
    });
    check(out, "mul", &[a.clone(), b], |t, v| {
        let y = t.mul(v[0], v[1]).unwrap();
        weighted_sum(t, y, 5)
    });
    check(out, "mul self", std::slice::from_ref(&a), |t, v| {
        let y = t.mul(v[0], v[0]).unwrap();
        weighted_sum(t, y, 6)
    });
    check(out, "scale", std::slice::from_ref(&a), |t, v| {
        let y = t.scale(v[0], -1.7);
        weighted_sum(t, y, 7)
    });
    check(out, "gelu", &[random_in(&[4, 5], -3.0, 3.0, &mut r)], |t, v| {
        let y = t.gelu(v[0]);
        weighted_sum(t, y, 8)
    });
    check(out, "sum", std::slice::from_ref(&a), |t, v| {
        let y = t.mul(v[0], v[0]).unwrap();
        t.sum(y)
    });
    check(out, "mean", &[a], |t, v| {
        let y = t.mul(v[0], v[0]).unwrap();
        t.mean(y)
    });
}

pub fn row_broadcast_and_normalizers(out: &mut Report) {
    let mut r = rng();
    let (x, b) = (random(&[4, 5], &mut r), random(&[5], &mut r));
    check(out, "add_row", &[x.clone(), b], |t, v| {
        let y = t.add_row(v[0], v[1]).unwrap();
        weighted_sum(t, y, 9)
    });
    check(out, "softmax_rows", &[random_in(&[3, 6], -3.0, 3.0, &mut r)], |t, v| {
        let y = t.softmax_rows(v[0]).unwrap();
        weighted_sum(t, y, 10)
    });
    let (g, bias) = (random_in(&[5], 0.5, 1.5, &mut r), random(&[5], &mut r));
    check(out, "layer_norm", &[x, g, bias], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], LN_EPS).unwrap();
        weighted_sum(t, y, 11)
    });
}

pub fn structural_ops(out: &mut Report) {
    let mut r = rng();
    let (a, b) = (random(&[3, 6], &mut r), random(&[3, 2], &mut r));
    check(out, "slice_cols", std::slice::from_ref(&a), |t, v| {
        let y = t.slice_cols(v[0], 2, 3).unwrap();
        weighted_sum(t, y, 12)
    });
    check(out, "concat_cols", &[a.clone(), b], |t, v| {
        let y = t.concat_cols(&[v[0], v[1], v[0]]).unwrap();
        weighted_sum(t, y, 13)
    });
    let token = random(&[1, 6], &mut r);
    check(out, "gather_rows", &[a.clone(), token], |t, v| {
        let y = t.gather_rows(&[v[0], v[1]], &[(0, 2), (1, 0), (0, 0), (1, 0), (0, 2)]).unwrap();
        weighted_sum(t, y, 14)
    });
    check(out, "select_rows", &[a], |t, v| {
        let y = t.select_rows(v[0], &[2, 0, 2]).unwrap();
        weighted_sum(t, y, 15)
    });
}

fn block_inputs(cfg: &BlockConfig, r: &mut SplitMix64) -> Vec<Tensor> {
    let mut p = BlockParams::init(cfg, r);
    // Perturb norms and biases away from their init values so every
    // gradient path carries signal.
    for t in p.fields_mut() {
        for v in t.data_mut() {
            *v += r.uniform(-0.3, 0.3);
        }
    }
    p.fields().into_iter().cloned().collect()
}

fn block_from(v: &[Var]) -> BlockParams<Var> {
    let mut it = v.iter().copied();
    let mut n = || it.next().expect("13 block tensors");
    BlockParams {
        ln1_gain: n(),
        ln1_bias: n(),
        w_q: n(),
        w_k: n(),
        w_v: n(),
        w_o: n(),
        b_o: n(),
        ln2_gain: n(),
        ln2_bias: n(),
        ff1_w: n(),
        ff1_b: n(),
        ff2_w: n(),
        ff2_b: n(),
    }
}

pub fn attention_ffn_and_block(out: &mut Report) {
    let mut r = rng();
    let cfg = BlockConfig { d_model: 4, n_heads: 2, d_ff: 6 };
    let att = AttentionConfig::new(4, 2).unwrap();
    let mut inputs = vec![random(&[3, 4], &mut r)];
    inputs.extend(block_inputs(&cfg, &mut r));

    check(out, "multi_head_attention", &inputs, |t, v| {
        let p = block_from(&v[1..]);
        let y = multi_head_attention(t, v[0], &p, att).unwrap().output;
        weighted_sum(t, y, 16)
    });
    check(out, "feed_forward", &inputs, |t, v| {
        let p = block_from(&v[1..]);
        let y = feed_forward(t, v[0], &p).unwrap();
        weighted_sum(t, y, 17)
    });
    check(out, "encoder_block", &inputs, |t, v| {
        let p = block_from(&v[1..]);
        let seq = TokenSequence { tokens: v[0], positions: vec![0, 1, 2] };
        let y = encoder_block(t, &seq, &p, att).unwrap().tokens;
        weighted_sum(t, y, 18)
    });
}

/// 2×2 grayscale patches, 4 of them, 2 visible.
fn toy_tmae() -> (Tmae, Tensor, Tensor, MaskSpec) {
    let config = TmaeConfig {
        patch_size: 2,
        channels: 1,
        encoder: StackConfig { d_model: 4, depth: 1, heads: 2, d_ff: 6 },
        decoder: StackConfig { d_model: 4, depth: 1, heads: 2, d_ff: 4 },
    };
    let mut model = Tmae::init(config, 5).unwrap();
    let mut r = SplitMix64::new(77);
    for t in model.weights.fields_mut() {
        for v in t.data_mut() {
            *v += r.uniform(-0.3, 0.3);
        }
    }
    let patches = random_in(&[4, 4], 0.0, 1.0, &mut r);
    let spec = MaskSpec::from_keep_count(3, 4, 2).unwrap();
    let visible =
        Tensor::new(vec![2, 4], spec.keep_indices.iter().flat_map(|&i| patches.row(i).to_vec()).collect()).unwrap();
    (model, visible, patches, spec)
}

pub fn full_tmae_loss(out: &mut Report) {
    let (model, visible, target, spec) = toy_tmae();
    let mut inputs: Vec<Tensor> = model.weights.fields().into_iter().cloned().collect();
    let n_weights = inputs.len();
    inputs.push(visible);
    let cfg = model.config;
    check(out, "tmae masked loss", &inputs, |t, v| {
        let mut it = v[..n_weights].iter().copied();
        let w = model.weights.map(|_| it.next().unwrap());
        let latent = encode_visible(t, &cfg, &w, v[n_weights], &spec.keep_indices, spec.n_patches).unwrap();
        let pred = decode_full(t, &cfg, &w, latent, &spec).unwrap();
        let target = t.constant(target.clone());
        masked_mse(t, pred, target, &spec).unwrap()
    });
}

pub fn all() -> Report {
    let mut out = Vec::new();
    matmul_family(&mut out);
    elementwise_ops(&mut out);
    row_broadcast_and_normalizers(&mut out);
    structural_ops(&mut out);
    attention_ffn_and_block(&mut out);
    full_tmae_loss(&mut out);
    out
}
