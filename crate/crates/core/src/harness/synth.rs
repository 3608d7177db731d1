//! Procedural toy images: smooth gradients, soft-edged blobs, a faint
//! oriented texture and light noise. Spatially correlated enough for a
//! small model to learn patch inpainting, and deterministic in the seed.

use crate::image::Image;
use crate::rng::SplitMix64;

fn color(rng: &mut SplitMix64) -> [f64; 3] {
    [rng.uniform(20.0, 235.0), rng.uniform(20.0, 235.0), rng.uniform(20.0, 235.0)]
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

struct Blob {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    cos: f64,
    sin: f64,
    soft: f64,
    color: [f64; 3],
}

pub fn synthetic_image(seed: u64, width: usize, height: usize) -> Image {
    let mut rng = SplitMix64::new(seed ^ 0x5EED_1A6E);
    let (w, h) = (width as f64, height as f64);
    let c0 = color(&mut rng);
    let c1 = color(&mut rng);
    let angle = rng.uniform(0.0, std::f64::consts::TAU);
    let (gx, gy) = (angle.cos(), angle.sin());
    let scale = w.max(h);

    let n_blobs = 2 + rng.below(3) as usize;
    let blobs: Vec<Blob> = (0..n_blobs)
        .map(|_| {
            let a = rng.uniform(0.0, std::f64::consts::PI);
            Blob {
                cx: rng.uniform(0.0, w),
                cy: rng.uniform(0.0, h),
                rx: rng.uniform(0.1, 0.4) * scale,
                ry: rng.uniform(0.1, 0.4) * scale,
                cos: a.cos(),
                sin: a.sin(),
                soft: rng.uniform(0.05, 0.3),
                color: color(&mut rng),
            }
        })
        .collect();
    let tex_freq = rng.uniform(0.05, 0.25);
    let tex_angle = rng.uniform(0.0, std::f64::consts::PI);
    let tex_amp = rng.uniform(0.0, 12.0);

    let mut data = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (x as f64, y as f64);
            let t = (((fx - w / 2.0) * gx + (fy - h / 2.0) * gy) / scale + 0.5).clamp(0.0, 1.0);
            let mut px: [f64; 3] = std::array::from_fn(|c| c0[c] * (1.0 - t) + c1[c] * t);
            for b in &blobs {
                let (dx, dy) = (fx - b.cx, fy - b.cy);
                let u = (dx * b.cos + dy * b.sin) / b.rx;
                let v = (-dx * b.sin + dy * b.cos) / b.ry;
                let r = (u * u + v * v).sqrt();
                let alpha = 1.0 - smoothstep(1.0 - b.soft, 1.0 + b.soft, r);
                for (v, &bc) in px.iter_mut().zip(&b.color) {
                    *v = *v * (1.0 - alpha) + bc * alpha;
                }
            }
            let tex = tex_amp * ((fx * tex_angle.cos() + fy * tex_angle.sin()) * tex_freq).sin();
            for v in px {
                let noise = rng.uniform(-2.0, 2.0);
                data.push((v + tex + noise).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(width, height, 3, data).expect("synthetic dimensions")
}

/// `count` images with ids `synth_0000`, `synth_0001`, ...
pub fn synthetic_corpus(seed: u64, count: usize, width: usize, height: usize) -> Vec<(String, Image)> {
    (0..count)
        .map(|i| {
            let s = seed.wrapping_mul(0x9E37_79B9).wrapping_add(i as u64);
            (format!("synth_{i:04}"), synthetic_image(s, width, height))
        })
        .collect()
}
