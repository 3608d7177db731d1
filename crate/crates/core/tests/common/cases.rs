//! Randomized pipeline inputs shared by the round-trip and fuzz suites.

use tmae::harness::synth::synthetic_image;
use tmae::rng::SplitMix64;
use tmae::{CodecParams, Image, PipelineConfig};

/// Small image plus a valid configuration: sides 1..=48, 1 or 3 channels,
/// patch size 1..=12, ratio in [0, 0.95), raw or DCT at any quality.
pub fn random_case(rng: &mut SplitMix64) -> (Image, PipelineConfig) {
    let w = 1 + rng.below(48) as usize;
    let h = 1 + rng.below(48) as usize;
    let img = if rng.below(2) == 0 {
        let rgb = synthetic_image(rng.next_u64(), w, h);
        Image::new(w, h, 1, rgb.data().chunks(3).map(|p| p[1]).collect()).unwrap()
    } else {
        synthetic_image(rng.next_u64(), w, h)
    };
    let codec =
        if rng.below(4) == 0 { CodecParams::raw() } else { CodecParams::dct(1 + rng.below(100) as u8).unwrap() };
    let config = PipelineConfig {
        patch_size: 1 + rng.below(12) as usize,
        mask_ratio: rng.uniform(0.0, 0.95),
        seed: rng.next_u64(),
        codec,
    };
    (img, config)
}

/// Flips, overwrites, truncates or extends a byte string.
pub fn mutate(bytes: &[u8], rng: &mut SplitMix64) -> Vec<u8> {
    let mut b = bytes.to_vec();
    match rng.below(4) {
        0 => b.truncate(rng.below(b.len() as u64 + 1) as usize),
        1 => {
            for _ in 0..1 + rng.below(4) {
                let i = rng.below(b.len() as u64) as usize;
                b[i] ^= 1 << rng.below(8);
            }
        }
        2 => {
            for _ in 0..1 + rng.below(4) {
                let i = rng.below(b.len() as u64) as usize;
                b[i] = rng.next_u64() as u8;
            }
        }
        _ => b.extend((0..1 + rng.below(8)).map(|_| rng.next_u64() as u8)),
    }
    b
}
