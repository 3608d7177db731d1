//! Transmitter-side patch geometry: patchify, seeded masks, and stacking of
//! the visible patches into a condensed image, with exact inverses.

use crate::error::{DecodeError, Error, Result};
use crate::image::{quantize_unit, Image};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Identifier of the SplitMix64 + Fisher-Yates mask generator, as stored in
/// containers.
pub const MASK_ALGORITHM_SPLITMIX64_FISHER_YATES: u8 = 1;

/// Gray level of filler patches in the condensed image.
pub const PAD_VALUE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    /// Padded dimensions, multiples of `patch_size`.
    pub width: usize,
    pub height: usize,
    /// Dimensions before edge replication.
    pub orig_width: usize,
    pub orig_height: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub cols: usize,
    pub rows: usize,
}

impl PatchGrid {
    pub fn for_image(width: usize, height: usize, channels: usize, patch_size: usize) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::Image(format!("zero-sized image {width}x{height}x{channels}")));
        }
        if patch_size == 0 {
            return Err(Error::Config("patch size must be positive".into()));
        }
        let cols = width.div_ceil(patch_size);
        let rows = height.div_ceil(patch_size);
        Ok(Self {
            width: cols * patch_size,
            height: rows * patch_size,
            orig_width: width,
            orig_height: height,
            channels,
            patch_size,
            cols,
            rows,
        })
    }

    pub fn n_patches(&self) -> usize {
        self.cols * self.rows
    }

    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    /// Grid holding `keep_count` stacked patches: same column count, as
    /// many rows as needed.
    pub fn condensed(&self, keep_count: usize) -> PatchGrid {
        let rows = keep_count.div_ceil(self.cols).max(1);
        let p = self.patch_size;
        PatchGrid {
            width: self.cols * p,
            height: rows * p,
            orig_width: self.cols * p,
            orig_height: rows * p,
            channels: self.channels,
            patch_size: p,
            cols: self.cols,
            rows,
        }
    }
}

fn read_patch(img: &Image, grid: &PatchGrid, index: usize, out: &mut [f64]) {
    let p = grid.patch_size;
    let (x0, y0) = ((index % grid.cols) * p, (index / grid.cols) * p);
    let c = grid.channels;
    for dy in 0..p {
        let start = ((y0 + dy) * img.width() + x0) * c;
        let src = &img.data()[start..start + p * c];
        for (o, &s) in out[dy * p * c..(dy + 1) * p * c].iter_mut().zip(src) {
            *o = f64::from(s) / 255.0;
        }
    }
}

fn write_patch(data: &mut [u8], width: usize, grid: &PatchGrid, index: usize, patch: &[f64]) {
    let p = grid.patch_size;
    let (x0, y0) = ((index % grid.cols) * p, (index / grid.cols) * p);
    let c = grid.channels;
    for dy in 0..p {
        let start = ((y0 + dy) * width + x0) * c;
        for (d, &v) in data[start..start + p * c].iter_mut().zip(&patch[dy * p * c..(dy + 1) * p * c]) {
            *d = quantize_unit(v);
        }
    }
}

/// Splits an image into row-major `p×p` patches scaled to `[0,1]`. Images
/// whose sides are not multiples of `p` are edge-replicated first.
pub fn patchify(image: &Image, patch_size: usize) -> Result<(Tensor, PatchGrid)> {
    let grid = PatchGrid::for_image(image.width(), image.height(), image.channels(), patch_size)?;
    let padded = image.pad_to_multiple(patch_size);
    let len = grid.patch_len();
    let mut data = vec![0.0; grid.n_patches() * len];
    for (i, out) in data.chunks_exact_mut(len).enumerate() {
        read_patch(&padded, &grid, i, out);
    }
    Ok((Tensor::new(vec![grid.n_patches(), len], data)?, grid))
}

/// Inverse of [`patchify`]: values are clamped to `[0,1]`, quantized to
/// 8 bits and cropped to the original size.
pub fn unpatchify(patches: &Tensor, grid: &PatchGrid) -> Result<Image> {
    check_patch_matrix(patches, grid.n_patches(), grid.patch_len())?;
    let mut data = vec![0u8; grid.width * grid.height * grid.channels];
    for i in 0..grid.n_patches() {
        write_patch(&mut data, grid.width, grid, i, patches.row(i));
    }
    let img = Image::new(grid.width, grid.height, grid.channels, data)?;
    if (grid.orig_width, grid.orig_height) == (grid.width, grid.height) {
        Ok(img)
    } else {
        img.crop(grid.orig_width, grid.orig_height)
    }
}

fn check_patch_matrix(patches: &Tensor, rows: usize, len: usize) -> Result<()> {
    if patches.shape() != [rows, len] {
        return Err(Error::Mask(format!("expected {rows} patches of length {len}, got shape {:?}", patches.shape())));
    }
    Ok(())
}

/// Shared transmitter/receiver description of which patches are sent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskSpec {
    pub seed: u64,
    pub n_patches: usize,
    pub keep_count: usize,
    pub keep_indices: Vec<usize>,
    pub masked_indices: Vec<usize>,
}

/// `max(1, floor(n·(1 − ratio)))`. A 1e-9 slack absorbs binary rounding of
/// the ratio so that, e.g., n = 10 and ratio 0.8 keep 2 patches, not 1.
pub fn keep_count(n_patches: usize, mask_ratio: f64) -> usize {
    let kept = (n_patches as f64 * (1.0 - mask_ratio) + 1e-9).floor() as usize;
    kept.clamp(1, n_patches.max(1))
}

pub fn check_ratio(mask_ratio: f64) -> Result<()> {
    if !(0.0..1.0).contains(&mask_ratio) {
        return Err(Error::Mask(format!("mask ratio {mask_ratio} outside [0, 1)")));
    }
    Ok(())
}

/// Seeded random mask with `keep_count(n_patches, mask_ratio)` visible patches.
pub fn generate_mask(seed: u64, n_patches: usize, mask_ratio: f64) -> Result<MaskSpec> {
    check_ratio(mask_ratio)?;
    MaskSpec::from_keep_count(seed, n_patches, keep_count(n_patches, mask_ratio))
}

impl MaskSpec {
    /// Regenerates a mask from the fields a container carries.
    ///
    /// Fisher-Yates over `0..n` from the top index down, drawing
    /// `j = next_u64() mod (i + 1)`; the first `keep_count` entries of the
    /// shuffled order, sorted, are the visible patches. The modulo draw is
    /// biased by less than `n / 2^64`.
    pub fn from_keep_count(seed: u64, n_patches: usize, keep_count: usize) -> Result<Self> {
        if n_patches == 0 {
            return Err(Error::Mask("mask over zero patches".into()));
        }
        if keep_count == 0 || keep_count > n_patches {
            return Err(Error::Mask(format!("keep count {keep_count} outside 1..={n_patches}")));
        }
        let mut rng = SplitMix64::new(seed);
        let mut order: Vec<usize> = (0..n_patches).collect();
        for i in (1..n_patches).rev() {
            let j = rng.below(i as u64 + 1) as usize;
            order.swap(i, j);
        }
        let mut keep_indices = order[..keep_count].to_vec();
        let mut masked_indices = order[keep_count..].to_vec();
        keep_indices.sort_unstable();
        masked_indices.sort_unstable();
        Ok(Self { seed, n_patches, keep_count, keep_indices, masked_indices })
    }

    /// Fraction of patches withheld.
    pub fn effective_ratio(&self) -> f64 {
        1.0 - self.keep_count as f64 / self.n_patches as f64
    }

    /// Per-patch visibility flags.
    pub fn visible_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n_patches];
        for &i in &self.keep_indices {
            flags[i] = true;
        }
        flags
    }
}

/// Lays the visible patches out row-major in a `grid.cols`-wide grid; the
/// trailing slots of the last row are mid-gray.
pub fn stack_visible(patches: &Tensor, spec: &MaskSpec, grid: &PatchGrid) -> Result<(Image, PatchGrid)> {
    if spec.n_patches != grid.n_patches() {
        return Err(Error::Mask(format!("mask covers {} patches, grid has {}", spec.n_patches, grid.n_patches())));
    }
    check_patch_matrix(patches, grid.n_patches(), grid.patch_len())?;
    let cgrid = grid.condensed(spec.keep_count);
    let mut data = vec![0u8; cgrid.width * cgrid.height * cgrid.channels];
    let pad = vec![PAD_VALUE; grid.patch_len()];
    for slot in 0..cgrid.n_patches() {
        let patch = match spec.keep_indices.get(slot) {
            Some(&src) => patches.row(src),
            None => &pad,
        };
        write_patch(&mut data, cgrid.width, &cgrid, slot, patch);
    }
    Ok((Image::new(cgrid.width, cgrid.height, cgrid.channels, data)?, cgrid))
}

/// Recovers the visible patches (keep-index order) from a condensed image.
pub fn unstack_visible(condensed: &Image, spec: &MaskSpec, grid: &PatchGrid) -> Result<Tensor> {
    let cgrid = grid.condensed(spec.keep_count);
    if (condensed.width(), condensed.height(), condensed.channels()) != (cgrid.width, cgrid.height, cgrid.channels) {
        return Err(DecodeError::new(
            "container",
            0,
            format!(
                "condensed image is {}x{}x{}, mask implies {}x{}x{}",
                condensed.width(),
                condensed.height(),
                condensed.channels(),
                cgrid.width,
                cgrid.height,
                cgrid.channels
            ),
        )
        .into());
    }
    let len = cgrid.patch_len();
    let mut data = vec![0.0; spec.keep_count * len];
    for (slot, out) in data.chunks_exact_mut(len).enumerate() {
        read_patch(condensed, &cgrid, slot, out);
    }
    Ok(Tensor::new(vec![spec.keep_count, len], data)?)
}
