//! Rate-distortion sweep over masking ratio × codec quality.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::codec::CodecParams;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::{psnr, ssim};
use crate::pipeline::{compress, decompress, PipelineConfig, RateBreakdown};
use crate::tmae::Tmae;

/// Identifier used for corpus-mean rows.
pub const MEAN_ID: &str = "mean";

pub const CSV_HEADER: [&str; 7] = ["image_id", "mask_ratio", "quality", "overall_bpp", "payload_bpp", "ssim", "psnr"];

/// One operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct RdPoint {
    pub image_id: String,
    pub mask_ratio: f64,
    pub quality: u8,
    pub overall_bpp: f64,
    pub payload_bpp: f64,
    pub ssim: f64,
    pub psnr: f64,
    /// Present on per-image points.
    pub rate: Option<RateBreakdown>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub ratios: Vec<f64>,
    pub qualities: Vec<u8>,
    /// Mask seed of image `i` is `seed + i`.
    pub seed: u64,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self { ratios: vec![0.5, 0.6, 0.67, 0.75, 0.8], qualities: (1..=9).map(|q| q * 10).collect(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub image_id: String,
    pub mask_ratio: f64,
    pub quality: u8,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    /// Grouped by (ratio, quality) in grid order; within a group the
    /// per-image points in corpus order followed by the corpus mean. A
    /// single-image corpus has no separate mean rows.
    pub points: Vec<RdPoint>,
    pub failures: Vec<CellFailure>,
}

impl SweepResult {
    /// Corpus-mean points; for a single-image corpus, its own points.
    pub fn means(&self) -> impl Iterator<Item = &RdPoint> {
        let has_means = self.points.iter().any(|p| p.image_id == MEAN_ID);
        self.points.iter().filter(move |p| !has_means || p.image_id == MEAN_ID)
    }

    pub fn per_image(&self) -> impl Iterator<Item = &RdPoint> {
        self.points.iter().filter(|p| p.image_id != MEAN_ID)
    }
}

/// Compresses, decompresses and scores one image.
pub fn evaluate_cell(id: &str, image: &Image, model: &Tmae, config: &PipelineConfig) -> Result<RdPoint> {
    let container = compress(image, config)?;
    let restored = decompress(&container, model)?;
    let rate = container.rate();
    Ok(RdPoint {
        image_id: id.to_owned(),
        mask_ratio: config.mask_ratio,
        quality: config.codec.quality,
        overall_bpp: rate.overall_bpp(),
        payload_bpp: rate.payload_bpp(),
        ssim: ssim(image, &restored)?,
        psnr: psnr(image, &restored)?,
        rate: Some(rate),
    })
}

/// Evaluates the full grid with the baseline DCT codec. Cells run in
/// parallel; results are assembled in grid order, so output is identical
/// for any thread count.
pub fn rd_sweep(corpus: &[(String, Image)], grid: &SweepGrid, model: &Tmae) -> Result<SweepResult> {
    sweep_with(corpus, grid, model, CodecParams::dct)
}

pub fn sweep_with(
    corpus: &[(String, Image)],
    grid: &SweepGrid,
    model: &Tmae,
    codec: impl Fn(u8) -> Result<CodecParams> + Sync,
) -> Result<SweepResult> {
    if corpus.is_empty() || grid.ratios.is_empty() || grid.qualities.is_empty() {
        return Err(Error::Config("sweep needs a non-empty corpus, ratio list and quality list".into()));
    }
    let mut cells = Vec::new();
    for &ratio in &grid.ratios {
        for &q in &grid.qualities {
            for idx in 0..corpus.len() {
                cells.push((ratio, q, idx));
            }
        }
    }
    let outcomes: Vec<Result<RdPoint>> = cells
        .par_iter()
        .map(|&(ratio, q, idx)| {
            let (id, img) = &corpus[idx];
            let config = PipelineConfig {
                patch_size: model.config.patch_size,
                mask_ratio: ratio,
                seed: grid.seed.wrapping_add(idx as u64),
                codec: codec(q)?,
            };
            evaluate_cell(id, img, model, &config)
        })
        .collect();

    let mut result = SweepResult::default();
    for (group_cells, group_outcomes) in cells.chunks(corpus.len()).zip(outcomes.chunks(corpus.len())) {
        let (ratio, q, _) = group_cells[0];
        let mut ok = Vec::new();
        for (&(_, _, idx), outcome) in group_cells.iter().zip(group_outcomes) {
            match outcome {
                Ok(p) => ok.push(p.clone()),
                Err(e) => {
                    log::warn!("sweep cell {} r={ratio} q={q} failed: {e}", corpus[idx].0);
                    result.failures.push(CellFailure {
                        image_id: corpus[idx].0.clone(),
                        mask_ratio: ratio,
                        quality: q,
                        reason: e.to_string(),
                    });
                }
            }
        }
        if ok.is_empty() || corpus.len() == 1 {
            result.points.extend(ok);
            continue;
        }
        let n = ok.len() as f64;
        let mean = RdPoint {
            image_id: MEAN_ID.to_owned(),
            mask_ratio: ratio,
            quality: q,
            overall_bpp: ok.iter().map(|p| p.overall_bpp).sum::<f64>() / n,
            payload_bpp: ok.iter().map(|p| p.payload_bpp).sum::<f64>() / n,
            ssim: ok.iter().map(|p| p.ssim).sum::<f64>() / n,
            psnr: ok.iter().map(|p| p.psnr).sum::<f64>() / n,
            rate: None,
        };
        result.points.extend(ok);
        result.points.push(mean);
    }
    Ok(result)
}

fn fmt_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{v:.4}")
    }
}

/// CSV with header `image_id,mask_ratio,quality,overall_bpp,payload_bpp,ssim,psnr`,
/// LF line endings, fixed decimal formatting.
pub fn write_csv<W: Write>(points: &[RdPoint], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in points {
        w.write_record([
            p.image_id.clone(),
            format!("{:.4}", p.mask_ratio),
            p.quality.to_string(),
            format!("{:.6}", p.overall_bpp),
            format!("{:.6}", p.payload_bpp),
            format!("{:.6}", p.ssim),
            fmt_psnr(p.psnr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(points: &[RdPoint]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(points, &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<RdPoint>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let bad =
        |line: usize, what: &str| Error::File { path: path.to_owned(), reason: format!("record {line}: bad {what}") };
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::File { path: path.to_owned(), reason: "unexpected CSV header".into() });
    }
    let mut points = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |i: usize, what: &str| -> Result<f64> {
            match &rec[i] {
                "inf" => Ok(f64::INFINITY),
                s => s.parse().map_err(|_| bad(line + 1, what)),
            }
        };
        points.push(RdPoint {
            image_id: rec[0].to_owned(),
            mask_ratio: num(1, "mask_ratio")?,
            quality: rec[2].parse().map_err(|_| bad(line + 1, "quality"))?,
            overall_bpp: num(3, "overall_bpp")?,
            payload_bpp: num(4, "payload_bpp")?,
            ssim: num(5, "ssim")?,
            psnr: num(6, "psnr")?,
            rate: None,
        });
    }
    Ok(points)
}

/// Two-column `bpp ssim` text, readable by gnuplot.
pub fn plot_data(title: &str, points: &[&RdPoint]) -> String {
    let mut s = format!("# {title}\n# overall_bpp ssim\n");
    for p in points {
        s.push_str(&format!("{:.6} {:.6}\n", p.overall_bpp, p.ssim));
    }
    s
}

/// Writes one curve per masking ratio (corpus means, ascending quality)
/// and the Pareto front of the masked ratios. Returns the files written.
pub fn write_plot_files(dir: impl AsRef<Path>, result: &SweepResult) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let means: Vec<&RdPoint> = result.means().collect();
    let mut ratios: Vec<f64> = means.iter().map(|p| p.mask_ratio).collect();
    ratios.dedup();
    let mut written = Vec::new();
    for r in ratios {
        let mut curve: Vec<&RdPoint> = means.iter().copied().filter(|p| p.mask_ratio == r).collect();
        curve.sort_by_key(|p| p.quality);
        let path = dir.join(format!("curve_r{r:.3}.dat"));
        let title = if r == 0.0 { "codec alone".to_owned() } else { format!("mask ratio {r:.3}") };
        std::fs::write(&path, plot_data(&title, &curve))?;
        written.push(path);
    }
    let masked: Vec<RdPoint> = means.iter().filter(|p| p.mask_ratio > 0.0).map(|p| (*p).clone()).collect();
    if !masked.is_empty() {
        let front = super::select::pareto_front(&masked);
        let path = dir.join("pareto.dat");
        std::fs::write(&path, plot_data("pareto front over masking ratios", &front.iter().collect::<Vec<_>>()))?;
        written.push(path);
    }
    Ok(written)
}
