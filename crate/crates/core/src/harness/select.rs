use std::cmp::Ordering;

use crate::codec::CodecParams;
use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;

use super::sweep::RdPoint;

/// Points not dominated in (lower bpp, higher SSIM), in ascending bpp.
/// Of exact duplicates only the first by image id is kept.
pub fn pareto_front(points: &[RdPoint]) -> Vec<RdPoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&points[a], &points[b]);
        pa.overall_bpp
            .total_cmp(&pb.overall_bpp)
            .then_with(|| pb.ssim.total_cmp(&pa.ssim))
            .then_with(|| pa.image_id.cmp(&pb.image_id))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for i in order {
        if points[i].ssim > best {
            best = points[i].ssim;
            front.push(points[i].clone());
        }
    }
    front
}

/// Highest-SSIM calibration point whose bpp fits `budget_bits` over a
/// `width × height` image, as a pipeline configuration built on `template`.
pub fn select_config_for_budget(
    budget_bits: u64,
    width: usize,
    height: usize,
    calibration: &[RdPoint],
    template: &PipelineConfig,
) -> Result<PipelineConfig> {
    if width == 0 || height == 0 {
        return Err(Error::Config("image dimensions must be positive".into()));
    }
    if calibration.is_empty() {
        return Err(Error::Config("empty calibration set".into()));
    }
    let pixels = (width * height) as f64;
    let ceiling = budget_bits as f64 / pixels;
    let best = calibration.iter().filter(|p| p.overall_bpp <= ceiling).max_by(|a, b| {
        a.ssim.total_cmp(&b.ssim).then_with(|| b.overall_bpp.partial_cmp(&a.overall_bpp).unwrap_or(Ordering::Equal))
    });
    match best {
        Some(p) => {
            let codec = CodecParams { codec: template.codec.codec, quality: p.quality };
            let cfg = PipelineConfig { mask_ratio: p.mask_ratio, codec, ..*template };
            cfg.validate()?;
            Ok(cfg)
        }
        None => {
            let min_bpp = calibration.iter().map(|p| p.overall_bpp).fold(f64::INFINITY, f64::min);
            Err(Error::InfeasibleBudget { budget_bpp: ceiling, min_bits: (min_bpp * pixels).ceil() as u64 })
        }
    }
}
