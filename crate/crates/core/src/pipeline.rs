//! End-to-end scheme: the transmitter patchifies, masks, stacks and codes
//! the visible patches; the receiver decodes, unstacks, and lets the model
//! fill in the withheld patches.
//!
//! Container layout (little-endian), followed by a codec bitstream:
//!
//! | offset | size | field                       |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `"TMAE"`              |
//! | 4      | 1    | version (1)                 |
//! | 5      | 4    | original width (`u32`)      |
//! | 9      | 4    | original height (`u32`)     |
//! | 13     | 1    | channels                    |
//! | 14     | 2    | patch size (`u16`)          |
//! | 16     | 4    | patch count (`u32`)         |
//! | 20     | 4    | visible patch count (`u32`) |
//! | 24     | 8    | mask seed (`u64`)           |
//! | 32     | 1    | mask algorithm id           |
//! | 33     | 1    | codec id                    |
//! | 34     | 1    | codec quality               |
//! | 35     | n    | codec bitstream             |
//!
//! The masking ratio is not stored; the visible count plus the seed fully
//! determine the mask.

use crate::codec::{self, CodecId, CodecParams};
use crate::error::{DecodeError, Error, Result};
use crate::image::Image;
use crate::masking::{
    check_ratio, generate_mask, patchify, stack_visible, unstack_visible, MaskSpec, PatchGrid,
    MASK_ALGORITHM_SPLITMIX64_FISHER_YATES,
};
use crate::tmae::Tmae;

pub const CONTAINER_MAGIC: &[u8; 4] = b"TMAE";
pub const CONTAINER_VERSION: u8 = 1;
pub const CONTAINER_HEADER_LEN: usize = 35;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub mask_ratio: f64,
    pub seed: u64,
    pub codec: CodecParams,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.patch_size > u16::MAX as usize {
            return Err(Error::Config(format!("patch size {} outside 1..=65535", self.patch_size)));
        }
        check_ratio(self.mask_ratio)?;
        self.codec.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ContainerHeader {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub n_patches: usize,
    pub keep_count: usize,
    pub seed: u64,
    pub mask_algorithm: u8,
    pub codec: CodecParams,
}

impl ContainerHeader {
    pub fn grid(&self) -> Result<PatchGrid> {
        PatchGrid::for_image(self.width, self.height, self.channels, self.patch_size)
    }

    pub fn mask(&self) -> Result<MaskSpec> {
        MaskSpec::from_keep_count(self.seed, self.n_patches, self.keep_count)
    }

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(CONTAINER_MAGIC);
        out.push(CONTAINER_VERSION);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.push(self.channels as u8);
        out.extend_from_slice(&(self.patch_size as u16).to_le_bytes());
        out.extend_from_slice(&(self.n_patches as u32).to_le_bytes());
        out.extend_from_slice(&(self.keep_count as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.push(self.mask_algorithm);
        out.push(self.codec.codec as u8);
        out.push(self.codec.quality);
    }

    /// Parses and cross-checks the header fields.
    pub fn read(bytes: &[u8]) -> Result<Self, DecodeError> {
        let err = |at: usize, reason: String| DecodeError::new("container", at, reason);
        if bytes.len() < CONTAINER_HEADER_LEN {
            return Err(err(bytes.len(), format!("truncated header, {} of {CONTAINER_HEADER_LEN} bytes", bytes.len())));
        }
        if &bytes[..4] != CONTAINER_MAGIC {
            return Err(err(0, "bad magic".into()));
        }
        if bytes[4] != CONTAINER_VERSION {
            return Err(err(4, format!("unsupported version {}", bytes[4])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let width = u32_at(5);
        let height = u32_at(9);
        let channels = bytes[13] as usize;
        let patch_size = u16::from_le_bytes([bytes[14], bytes[15]]) as usize;
        let n_patches = u32_at(16);
        let keep_count = u32_at(20);
        let seed = u64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes"));
        let mask_algorithm = bytes[32];
        if width == 0 || height == 0 || channels == 0 {
            return Err(err(5, "zero image dimension".into()));
        }
        if patch_size == 0 {
            return Err(err(14, "zero patch size".into()));
        }
        let expected = width.div_ceil(patch_size) * height.div_ceil(patch_size);
        if n_patches != expected {
            return Err(err(16, format!("patch count {n_patches}, geometry implies {expected}")));
        }
        if keep_count == 0 || keep_count > n_patches {
            return Err(err(20, format!("visible count {keep_count} outside 1..={n_patches}")));
        }
        if mask_algorithm != MASK_ALGORITHM_SPLITMIX64_FISHER_YATES {
            return Err(err(32, format!("unknown mask algorithm {mask_algorithm}")));
        }
        let codec_id = CodecId::from_u8(bytes[33]).ok_or_else(|| err(33, format!("unknown codec id {}", bytes[33])))?;
        let quality = bytes[34];
        if !(1..=100).contains(&quality) {
            return Err(err(34, format!("quality {quality} outside 1..=100")));
        }
        Ok(Self {
            width,
            height,
            channels,
            patch_size,
            n_patches,
            keep_count,
            seed,
            mask_algorithm,
            codec: CodecParams { codec: codec_id, quality },
        })
    }
}

/// A compressed image: header plus codec bitstream of the condensed image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Container {
    pub header: ContainerHeader,
    pub bitstream: Vec<u8>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CONTAINER_HEADER_LEN + self.bitstream.len());
        self.header.write(&mut out);
        out.extend_from_slice(&self.bitstream);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let header = ContainerHeader::read(bytes)?;
        let bitstream = bytes[CONTAINER_HEADER_LEN..].to_vec();
        let bh = codec::read_header(&bitstream)
            .map_err(|e| DecodeError::new("container", CONTAINER_HEADER_LEN + e.offset, e.reason))?;
        if bh.params != header.codec {
            return Err(DecodeError::new("container", 33, "codec parameters disagree with bitstream"));
        }
        Ok(Self { header, bitstream })
    }

    pub fn total_len(&self) -> usize {
        CONTAINER_HEADER_LEN + self.bitstream.len()
    }

    pub fn rate(&self) -> RateBreakdown {
        let grid =
            PatchGrid::for_image(self.header.width, self.header.height, self.header.channels, self.header.patch_size)
                .expect("validated header");
        let cgrid = grid.condensed(self.header.keep_count);
        RateBreakdown {
            total_bits: 8 * self.total_len() as u64,
            payload_bits: 8 * self.bitstream.len() as u64,
            original_pixels: (self.header.width * self.header.height) as u64,
            condensed_pixels: (cgrid.width * cgrid.height) as u64,
        }
    }
}

/// Bit and pixel counts behind the reported rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RateBreakdown {
    /// Whole container, header included.
    pub total_bits: u64,
    /// Codec bitstream only.
    pub payload_bits: u64,
    pub original_pixels: u64,
    pub condensed_pixels: u64,
}

impl RateBreakdown {
    pub fn overall_bpp(&self) -> f64 {
        self.total_bits as f64 / self.original_pixels as f64
    }

    pub fn payload_bpp(&self) -> f64 {
        self.payload_bits as f64 / self.original_pixels as f64
    }

    /// Codec rate measured on the condensed image itself.
    pub fn stacked_bpp(&self) -> f64 {
        self.payload_bits as f64 / self.condensed_pixels as f64
    }

    pub fn condensed_fraction(&self) -> f64 {
        self.condensed_pixels as f64 / self.original_pixels as f64
    }
}

/// `(total bits, payload bits)` per original pixel.
pub fn overall_bpp(c: &Container, width: usize, height: usize) -> Result<(f64, f64)> {
    if width == 0 || height == 0 {
        return Err(Error::Image("bpp over zero pixels".into()));
    }
    let px = (width * height) as f64;
    Ok(((8 * c.total_len()) as f64 / px, (8 * c.bitstream.len()) as f64 / px))
}

/// Model-free transmitter path.
pub fn compress(image: &Image, config: &PipelineConfig) -> Result<Container> {
    config.validate()?;
    if image.channels() > 255 || image.width() > u32::MAX as usize || image.height() > u32::MAX as usize {
        return Err(Error::Image("image too large for the container header".into()));
    }
    let (patches, grid) = patchify(image, config.patch_size)?;
    if grid.n_patches() > u32::MAX as usize {
        return Err(Error::Image("too many patches".into()));
    }
    let spec = generate_mask(config.seed, grid.n_patches(), config.mask_ratio)?;
    let (condensed, _) = stack_visible(&patches, &spec, &grid)?;
    let bitstream = codec::encode(&condensed, config.codec)?;
    let header = ContainerHeader {
        width: image.width(),
        height: image.height(),
        channels: image.channels(),
        patch_size: config.patch_size,
        n_patches: grid.n_patches(),
        keep_count: spec.keep_count,
        seed: config.seed,
        mask_algorithm: MASK_ALGORITHM_SPLITMIX64_FISHER_YATES,
        codec: config.codec,
    };
    Ok(Container { header, bitstream })
}

/// Everything the receiver recovers before running the model.
pub struct Received {
    pub grid: PatchGrid,
    pub spec: MaskSpec,
    pub condensed: Image,
    pub visible: crate::tensor::Tensor,
}

/// Receiver steps up to (not including) reconstruction.
pub fn receive(c: &Container) -> Result<Received> {
    let grid = c.header.grid()?;
    let spec = c.header.mask()?;
    let condensed = codec::decode_at(&c.bitstream, CONTAINER_HEADER_LEN)?;
    let visible = unstack_visible(&condensed, &spec, &grid)?;
    Ok(Received { grid, spec, condensed, visible })
}

pub fn decompress(c: &Container, model: &Tmae) -> Result<Image> {
    if model.config.patch_size != c.header.patch_size || model.config.channels != c.header.channels {
        return Err(Error::ModelMismatch(format!(
            "checkpoint uses {}px patches with {} channels, container has {}px with {}",
            model.config.patch_size, model.config.channels, c.header.patch_size, c.header.channels
        )));
    }
    let r = receive(c)?;
    model.reconstruct(&r.visible, &r.spec, &r.grid)
}

/// Parses and decompresses raw container bytes.
pub fn decompress_bytes(bytes: &[u8], model: &Tmae) -> Result<Image> {
    decompress(&Container::from_bytes(bytes)?, model)
}
