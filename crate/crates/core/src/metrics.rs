//! Full-reference quality metrics on 8-bit images.

use crate::error::{Error, Result};
use crate::image::Image;

pub const DYNAMIC_RANGE: f64 = 255.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * DYNAMIC_RANGE) * (0.01 * DYNAMIC_RANGE);
pub const SSIM_C2: f64 = (0.03 * DYNAMIC_RANGE) * (0.03 * DYNAMIC_RANGE);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SsimMode {
    /// BT.601 luma of RGB input; single-channel input is used as is.
    #[default]
    Luma,
    /// Mean of per-channel SSIM.
    ChannelMean,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub ssim: f64,
    /// `f64::INFINITY` for identical images.
    pub psnr: f64,
    pub mse: f64,
    pub bpp: f64,
}

impl MetricReport {
    pub fn compare(reference: &Image, test: &Image, bpp: f64) -> Result<Self> {
        Ok(Self { ssim: ssim(reference, test)?, psnr: psnr(reference, test)?, mse: mse(reference, test)?, bpp })
    }
}

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width(), a.height(), a.channels()) != (b.width(), b.height(), b.channels()) {
        return Err(Error::Image(format!(
            "dimension mismatch: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean squared error over all samples.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(255² / mse)`; `+∞` when the images are identical.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (DYNAMIC_RANGE * DYNAMIC_RANGE / m).log10())
}

/// Luma-only SSIM.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, SsimMode::Luma)
}

pub fn ssim_with(a: &Image, b: &Image, mode: SsimMode) -> Result<f64> {
    same_dims(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::Image(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let (w, h) = (a.width(), a.height());
    match (mode, a.channels()) {
        (SsimMode::Luma, 3) => Ok(ssim_plane(&luma(a), &luma(b), w, h)),
        (SsimMode::Luma, 1) => Ok(ssim_plane(&plane(a, 0), &plane(b, 0), w, h)),
        (SsimMode::Luma, c) => Err(Error::Image(format!("luma SSIM needs 1 or 3 channels, got {c}"))),
        (SsimMode::ChannelMean, c) => {
            let total: f64 = (0..c).map(|ch| ssim_plane(&plane(a, ch), &plane(b, ch), w, h)).sum();
            Ok(total / c as f64)
        }
    }
}

/// BT.601 luma, unrounded.
pub fn luma(img: &Image) -> Vec<f64> {
    img.data()
        .chunks_exact(3)
        .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
        .collect()
}

fn plane(img: &Image, ch: usize) -> Vec<f64> {
    img.data().iter().skip(ch).step_by(img.channels()).map(|&v| f64::from(v)).collect()
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - center;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// SSIM of one local window given its weighted moments.
pub fn ssim_from_moments(mu_x: f64, mu_y: f64, var_x: f64, var_y: f64, cov: f64) -> f64 {
    ((2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2))
}

/// Valid-window filtering: horizontal pass then vertical pass, keeping
/// only window positions fully inside the image.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = taps.iter().zip(&row[x..x + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(k, t)| t * horiz[(y + k) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let taps = gaussian_taps();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, w, h, &taps);
    let mu_y = filter_valid(y, w, h, &taps);
    let e_xx = filter_valid(&xx, w, h, &taps);
    let e_yy = filter_valid(&yy, w, h, &taps);
    let e_xy = filter_valid(&xy, w, h, &taps);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            ssim_from_moments(mx, my, e_xx[i] - mx * mx, e_yy[i] - my * my, e_xy[i] - mx * my)
        })
        .sum();
    total / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_images() {
        let img = Image::new(16, 16, 3, (0..768).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
        assert_eq!(ssim(&img, &img).unwrap(), 1.0);
        assert_eq!(psnr(&img, &img).unwrap(), f64::INFINITY);
        assert_eq!(mse(&img, &img).unwrap(), 0.0);
    }

    #[test]
    fn black_versus_white_closed_form() {
        let a = Image::filled(16, 16, 1, 0).unwrap();
        let b = Image::filled(16, 16, 1, 255).unwrap();
        let want = SSIM_C1 / (255.0 * 255.0 + SSIM_C1);
        assert!((want - 6.5025 / 65031.5025).abs() < 1e-15);
        let got = ssim(&a, &b).unwrap();
        assert!((got - want).abs() < 1e-12, "{got}");
        assert!((got - 1.0e-4).abs() < 1e-6);
    }

    #[test]
    fn psnr_of_unit_offset() {
        let a = Image::filled(12, 12, 3, 100).unwrap();
        let b = Image::filled(12, 12, 3, 101).unwrap();
        assert_eq!(mse(&a, &b).unwrap(), 1.0);
        let p = psnr(&a, &b).unwrap();
        assert!((p - 20.0 * 255f64.log10()).abs() < 1e-12);
        assert!((p - 48.13).abs() < 0.01);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::filled(12, 12, 1, 0).unwrap();
        let b = Image::filled(12, 13, 1, 0).unwrap();
        assert!(ssim(&a, &b).is_err());
        assert!(psnr(&a, &b).is_err());
        let tiny = Image::filled(8, 8, 1, 0).unwrap();
        assert!(ssim(&tiny, &tiny).is_err());
    }

    #[test]
    fn taps_are_normalized() {
        let t = gaussian_taps();
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
    }
}
