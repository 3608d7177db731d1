mod common;

use common::block::{equivariance_gap, maps, params, run};
use common::oracle;
use common::random;
use tmae::autodiff::Tape;
use tmae::rng::SplitMix64;
use tmae::transformer::{multi_head_attention, scaled_attention, AttentionConfig, BlockConfig, BlockParams};
use tmae::Tensor;

#[test]
fn single_head_is_plain_attention() {
    let mut rng = SplitMix64::new(1);
    let cfg = BlockConfig { d_model: 4, n_heads: 1, d_ff: 8 };
    let p = params(&cfg, 2);
    let x = random(&[5, 4], &mut rng);

    let mut tape = Tape::new();
    let pv = p.map(&mut |t: &Tensor| tape.constant(t.clone()));
    let xv = tape.constant(x.clone());
    let mha = multi_head_attention(&mut tape, xv, &pv, AttentionConfig::new(4, 1).unwrap()).unwrap();
    let q = tape.matmul(xv, pv.w_q).unwrap();
    let k = tape.matmul(xv, pv.w_k).unwrap();
    let v = tape.matmul(xv, pv.w_v).unwrap();
    let (o, _) = scaled_attention(&mut tape, q, k, v).unwrap();
    let o = tape.matmul(o, pv.w_o).unwrap();
    let o = tape.add_row(o, pv.b_o).unwrap();
    assert!(tape.value(mha.output).max_abs_diff(tape.value(o)) < 1e-12);
}

#[test]
fn two_heads_match_staged_oracle() {
    let mut rng = SplitMix64::new(3);
    let cfg = BlockConfig { d_model: 4, n_heads: 2, d_ff: 8 };
    let p = params(&cfg, 4);
    let x = random(&[3, 4], &mut rng);
    let mut tape = Tape::new();
    let pv = p.map(&mut |t: &Tensor| tape.constant(t.clone()));
    let xv = tape.constant(x.clone());
    let mha = multi_head_attention(&mut tape, xv, &pv, AttentionConfig::new(4, 2).unwrap()).unwrap();
    let expected = oracle::multi_head(&oracle::mat(&x), &p, 2);
    assert!(oracle::max_diff(&expected, tape.value(mha.output)) < 1e-12);
}

#[test]
fn zero_weights_pass_input_through() {
    let mut rng = SplitMix64::new(5);
    let cfg = BlockConfig { d_model: 8, n_heads: 2, d_ff: 16 };
    let x = random(&[6, 8], &mut rng);
    let out = run(&x, &BlockParams::zeros(&cfg), 2, false);
    assert_eq!(out, x);
}

#[test]
fn tiny_block_matches_staged_oracle() {
    let mut rng = SplitMix64::new(6);
    for heads in [1, 2] {
        let cfg = BlockConfig { d_model: 4, n_heads: heads, d_ff: 8 };
        let p = params(&cfg, 7);
        let x = random(&[2, 4], &mut rng);
        let got = run(&x, &p, heads, false);
        let expected = oracle::block(&oracle::mat(&x), &p, heads);
        let diff = oracle::max_diff(&expected, &got);
        assert!(diff < 1e-10, "heads={heads}: {diff:e}");
    }
}

#[test]
fn permutation_equivariance_without_positions() {
    let mut rng = SplitMix64::new(8);
    let cfg = BlockConfig { d_model: 8, n_heads: 2, d_ff: 16 };
    let p = params(&cfg, 9);
    let x = random(&[5, 8], &mut rng);
    let perm = [3, 0, 4, 1, 2];
    assert!(equivariance_gap(&x, &p, 2, &perm, false) < 1e-9);
    assert!(equivariance_gap(&x, &p, 2, &perm, true) > 1e-3);
}

#[test]
fn attention_maps_are_row_stochastic() {
    let mut rng = SplitMix64::new(10);
    let cfg = BlockConfig { d_model: 8, n_heads: 4, d_ff: 8 };
    let p = params(&cfg, 11);
    let x = random(&[7, 8], &mut rng);
    let ms = maps(&x, &p, 4);
    assert_eq!(ms.len(), 4);
    for m in ms {
        assert_eq!(m.shape(), [7, 7]);
        for r in 0..7 {
            assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(m.row(r).iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

#[test]
fn block_is_deterministic() {
    let mut rng = SplitMix64::new(12);
    let cfg = BlockConfig { d_model: 8, n_heads: 2, d_ff: 16 };
    let p = params(&cfg, 13);
    let x = random(&[4, 8], &mut rng);
    assert_eq!(run(&x, &p, 2, true), run(&x, &p, 2, true));
}

#[test]
fn head_count_must_divide_width() {
    assert!(AttentionConfig::new(6, 4).is_err());
    assert!(BlockConfig { d_model: 8, n_heads: 3, d_ff: 8 }.validate().is_err());
}
