//! Straight-line reference computations on nested vectors, written
//! independently of the tape.

use tmae::transformer::{BlockParams, LN_EPS};
use tmae::Tensor;

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &Tensor) -> Mat {
    (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
}

pub fn vecf(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

pub fn add_row(a: &Mat, b: &[f64]) -> Mat {
    a.iter().map(|x| x.iter().zip(b).map(|(p, q)| p + q).collect()).collect()
}

pub fn cols(a: &Mat, start: usize, width: usize) -> Mat {
    a.iter().map(|r| r[start..start + width].to_vec()).collect()
}

pub fn layer_norm(a: &Mat, g: &[f64], b: &[f64]) -> Mat {
    a.iter()
        .map(|r| {
            let n = r.len() as f64;
            let mu = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            r.iter().enumerate().map(|(j, v)| (v - mu) / (var + LN_EPS).sqrt() * g[j] + b[j]).collect()
        })
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Single-head attention with explicit loops; returns (output, weights).
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> (Mat, Mat) {
    let d = q[0].len() as f64;
    let mut weights = Vec::new();
    for qi in q {
        let logits: Vec<f64> =
            k.iter().map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / d.sqrt()).collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = e.iter().sum();
        weights.push(e.iter().map(|x| x / s).collect::<Vec<_>>());
    }
    (matmul(&weights, v), weights)
}

pub fn multi_head(x: &Mat, p: &BlockParams<Tensor>, heads: usize) -> Mat {
    let q = matmul(x, &mat(&p.w_q));
    let k = matmul(x, &mat(&p.w_k));
    let v = matmul(x, &mat(&p.w_v));
    let dh = q[0].len() / heads;
    let mut concat = vec![Vec::new(); x.len()];
    for h in 0..heads {
        let (o, _) = attention(&cols(&q, h * dh, dh), &cols(&k, h * dh, dh), &cols(&v, h * dh, dh));
        for (row, part) in concat.iter_mut().zip(o) {
            row.extend(part);
        }
    }
    add_row(&matmul(&concat, &mat(&p.w_o)), &vecf(&p.b_o))
}

pub fn block(x: &Mat, p: &BlockParams<Tensor>, heads: usize) -> Mat {
    let n1 = layer_norm(x, &vecf(&p.ln1_gain), &vecf(&p.ln1_bias));
    let x1 = add(x, &multi_head(&n1, p, heads));
    let n2 = layer_norm(&x1, &vecf(&p.ln2_gain), &vecf(&p.ln2_bias));
    let h = add_row(&matmul(&n2, &mat(&p.ff1_w)), &vecf(&p.ff1_b));
    let h: Mat = h.iter().map(|r| r.iter().map(|&v| gelu(v)).collect()).collect();
    let ff = add_row(&matmul(&h, &mat(&p.ff2_w)), &vecf(&p.ff2_b));
    add(&x1, &ff)
}

pub fn max_diff(a: &Mat, b: &Tensor) -> f64 {
    let mut worst = 0.0f64;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((v - b.row(r)[c]).abs());
        }
    }
    worst
}

/// Brute-force SSIM: explicit 2-D Gaussian window over every valid
/// position, BT.601 luma for RGB, mean of the local index map.
pub fn ssim(a: &tmae::Image, b: &tmae::Image) -> f64 {
    let to_plane = |img: &tmae::Image| -> Vec<f64> {
        match img.channels() {
            1 => img.data().iter().map(|&v| f64::from(v)).collect(),
            _ => img
                .data()
                .chunks(3)
                .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
                .collect(),
        }
    };
    let (x, y) = (to_plane(a), to_plane(b));
    let (w, h) = (a.width(), a.height());
    let mut window = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in window.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let (c1, c2) = ((0.01f64 * 255.0).powi(2), (0.03f64 * 255.0).powi(2));
    let mut sum = 0.0;
    let mut count = 0;
    for oy in 0..=h - 11 {
        for ox in 0..=w - 11 {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..11 {
                for j in 0..11 {
                    let g = window[i][j] / total;
                    let (p, q) = (x[(oy + i) * w + ox + j], y[(oy + i) * w + ox + j]);
                    mx += g * p;
                    my += g * q;
                    sxx += g * p * p;
                    syy += g * q * q;
                    sxy += g * p * q;
                }
            }
            let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
            sum += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    sum / count as f64
}
