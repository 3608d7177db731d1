//! Baseline block-DCT image codec and a raw passthrough, behind one
//! bitstream format.
//!
//! Bitstream (little-endian):
//!
//! | offset | size | field                                  |
//! |--------|------|----------------------------------------|
//! | 0      | 4    | magic `"BDC1"`                         |
//! | 4      | 1    | codec id (0 = raw, 1 = baseline DCT)   |
//! | 5      | 1    | quality 1..=100                        |
//! | 6      | 4    | width (`u32`)                          |
//! | 10     | 4    | height (`u32`)                         |
//! | 14     | 1    | channels                               |
//! | 15     | 4    | payload length (`u32`)                 |
//! | 19     | n    | payload                                |
//!
//! The raw payload is the interleaved 8-bit samples. The DCT payload codes
//! each plane (Y, Cb, Cr for 3-channel input, the samples themselves
//! otherwise) as 8×8 blocks in raster order over the edge-replicated
//! image. Per block: the DC difference to the previous block of the same
//! plane as a zigzag-signed LEB128 varint, then `(zero run, value)` pairs
//! over the 63 AC coefficients in zigzag order (run as an unsigned varint
//! in `0..=62`, value as a signed varint), closed by the end-of-block run
//! value 63.

use crate::error::{DecodeError, Error, Result};
use crate::image::Image;

pub const BITSTREAM_MAGIC: &[u8; 4] = b"BDC1";
pub const HEADER_LEN: usize = 19;

const EOB: u64 = 63;
/// Upper bound on decoded samples, guarding allocations on hostile headers.
const MAX_SAMPLES: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodecId {
    Raw = 0,
    Dct = 1,
}

impl CodecId {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(CodecId::Raw),
            1 => Some(CodecId::Dct),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CodecParams {
    pub codec: CodecId,
    pub quality: u8,
}

impl CodecParams {
    pub fn raw() -> Self {
        Self { codec: CodecId::Raw, quality: 100 }
    }

    pub fn dct(quality: u8) -> Result<Self> {
        let p = Self { codec: CodecId::Dct, quality };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=100).contains(&self.quality) {
            return Err(Error::Config(format!("quality {} outside 1..=100", self.quality)));
        }
        Ok(())
    }
}

/// Standard luminance quantization table, row-major.
pub const BASE_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Row-major index of the k-th coefficient in zigzag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54,
    47, 55, 62, 63,
];

fn dct_basis() -> &'static [[f64; 8]; 8] {
    use std::sync::OnceLock;
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (k, row) in b.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (n, v) in row.iter_mut().enumerate() {
                *v = scale * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        b
    })
}

/// Orthonormal 2-D DCT-II of a row-major 8×8 block.
pub fn dct_block(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for k in 0..8 {
            tmp[y * 8 + k] = (0..8).map(|x| b[k][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for k in 0..8 {
        for u in 0..8 {
            out[k * 8 + u] = (0..8).map(|y| b[k][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// Inverse of [`dct_block`].
pub fn idct_block(coeffs: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|k| b[k][y] * coeffs[k * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| b[u][x] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// Quality-scaled table: `scale = 5000/q` below 50, `200 − 2q` otherwise;
/// entries `clamp(floor((t·scale + 50)/100), 1, 255)`.
pub fn quant_table(quality: u8) -> [u16; 64] {
    let q = u32::from(quality.clamp(1, 100));
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0u16; 64];
    for (o, &t) in out.iter_mut().zip(&BASE_TABLE) {
        *o = ((u32::from(t) * scale + 50) / 100).clamp(1, 255) as u16;
    }
    out
}

pub fn quantize(coeffs: &[f64; 64], quality: u8) -> [i32; 64] {
    let table = quant_table(quality);
    let mut out = [0i32; 64];
    for i in 0..64 {
        out[i] = (coeffs[i] / f64::from(table[i])).round() as i32;
    }
    out
}

pub fn dequantize(q: &[i32; 64], quality: u8) -> [f64; 64] {
    let table = quant_table(quality);
    let mut out = [0.0; 64];
    for i in 0..64 {
        out[i] = f64::from(q[i]) * f64::from(table[i]);
    }
    out
}

fn put_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn put_svarint(out: &mut Vec<u8>, v: i64) {
    put_varint(out, ((v << 1) ^ (v >> 63)) as u64);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    /// Added to `pos` in error offsets.
    base: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, reason: impl Into<String>) -> DecodeError {
        DecodeError::new("bitstream", self.base + self.pos, reason)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!("truncated, needed {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn varint(&mut self) -> Result<u64, DecodeError> {
        let mut v = 0u64;
        for shift in (0..35).step_by(7) {
            let b = *self.bytes.get(self.pos).ok_or_else(|| self.err("truncated varint"))?;
            self.pos += 1;
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(self.err("varint longer than 5 bytes"))
    }

    fn svarint(&mut self) -> Result<i64, DecodeError> {
        let u = self.varint()?;
        Ok((u >> 1) as i64 ^ -((u & 1) as i64))
    }
}

/// Planes of `f64` samples, one `Vec` per plane, over a padded grid.
fn to_planes(img: &Image) -> Vec<Vec<f64>> {
    let (n, c) = (img.pixel_count(), img.channels());
    let d = img.data();
    if c == 3 {
        let mut planes = vec![Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
        for px in d.chunks_exact(3) {
            let (r, g, b) = (f64::from(px[0]), f64::from(px[1]), f64::from(px[2]));
            planes[0].push(0.299 * r + 0.587 * g + 0.114 * b);
            planes[1].push(-0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0);
            planes[2].push(0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0);
        }
        planes
    } else {
        (0..c).map(|ch| d.iter().skip(ch).step_by(c).map(|&v| f64::from(v)).collect()).collect()
    }
}

fn from_planes(planes: &[Vec<f64>], width: usize, height: usize) -> Image {
    let c = planes.len();
    let n = width * height;
    let mut data = Vec::with_capacity(n * c);
    let clamp = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    for i in 0..n {
        if c == 3 {
            let (y, cb, cr) = (planes[0][i], planes[1][i] - 128.0, planes[2][i] - 128.0);
            data.push(clamp(y + 1.402 * cr));
            data.push(clamp(y - 0.344_136 * cb - 0.714_136 * cr));
            data.push(clamp(y + 1.772 * cb));
        } else {
            data.extend(planes.iter().map(|p| clamp(p[i])));
        }
    }
    Image::new(width, height, c, data).expect("plane dimensions")
}

fn encode_dct_payload(img: &Image, quality: u8, out: &mut Vec<u8>) {
    let padded = img.pad_to_multiple(8);
    let (w, h) = (padded.width(), padded.height());
    for plane in to_planes(&padded) {
        let mut prev_dc = 0i64;
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    for x in 0..8 {
                        block[y * 8 + x] = plane[(by + y) * w + bx + x] - 128.0;
                    }
                }
                let q = quantize(&dct_block(&block), quality);
                let dc = i64::from(q[0]);
                put_svarint(out, dc - prev_dc);
                prev_dc = dc;
                let mut run = 0u64;
                for &idx in &ZIGZAG[1..] {
                    let v = q[idx];
                    if v == 0 {
                        run += 1;
                    } else {
                        put_varint(out, run);
                        put_svarint(out, i64::from(v));
                        run = 0;
                    }
                }
                put_varint(out, EOB);
            }
        }
    }
}

fn decode_dct_payload(
    cur: &mut Cursor<'_>,
    width: usize,
    height: usize,
    channels: usize,
    quality: u8,
) -> Result<Image, DecodeError> {
    let (w, h) = (width.div_ceil(8) * 8, height.div_ceil(8) * 8);
    let mut planes = Vec::with_capacity(channels);
    for _ in 0..channels {
        let mut plane = vec![0.0; w * h];
        let mut prev_dc = 0i64;
        for by in (0..h).step_by(8) {
            for bx in (0..w).step_by(8) {
                let mut q = [0i32; 64];
                let dc = prev_dc + cur.svarint()?;
                q[0] = i32::try_from(dc).map_err(|_| cur.err("DC coefficient overflow"))?;
                prev_dc = dc;
                let mut k = 1usize;
                loop {
                    let run = cur.varint()?;
                    if run == EOB {
                        break;
                    }
                    k += run as usize;
                    if k > 63 {
                        return Err(cur.err("run past end of block"));
                    }
                    let v = cur.svarint()?;
                    if v == 0 {
                        return Err(cur.err("zero-valued coefficient pair"));
                    }
                    q[ZIGZAG[k]] = i32::try_from(v).map_err(|_| cur.err("coefficient overflow"))?;
                    k += 1;
                }
                let px = idct_block(&dequantize(&q, quality));
                for y in 0..8 {
                    for x in 0..8 {
                        plane[(by + y) * w + bx + x] = px[y * 8 + x] + 128.0;
                    }
                }
            }
        }
        planes.push(plane);
    }
    let img = from_planes(&planes, w, h);
    if (w, h) == (width, height) {
        Ok(img)
    } else {
        Ok(img.crop(width, height).expect("crop within padded image"))
    }
}

/// Encodes an image; any dimensions are accepted (edge-replicated
/// internally for the DCT path, cropped back on decode).
pub fn encode(img: &Image, params: CodecParams) -> Result<Vec<u8>> {
    params.validate()?;
    if img.channels() > 255 || img.width() > u32::MAX as usize || img.height() > u32::MAX as usize {
        return Err(Error::Image("image too large for the bitstream header".into()));
    }
    let mut payload = Vec::new();
    match params.codec {
        CodecId::Raw => payload.extend_from_slice(img.data()),
        CodecId::Dct => encode_dct_payload(img, params.quality, &mut payload),
    }
    let payload_len = u32::try_from(payload.len()).map_err(|_| Error::Image("payload exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(BITSTREAM_MAGIC);
    out.push(params.codec as u8);
    out.push(params.quality);
    out.extend_from_slice(&(img.width() as u32).to_le_bytes());
    out.extend_from_slice(&(img.height() as u32).to_le_bytes());
    out.push(img.channels() as u8);
    out.extend_from_slice(&payload_len.to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parsed header fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitstreamHeader {
    pub params: CodecParams,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub payload_len: usize,
}

pub fn read_header(bytes: &[u8]) -> Result<BitstreamHeader, DecodeError> {
    read_header_at(bytes, 0)
}

fn read_header_at(bytes: &[u8], base: usize) -> Result<BitstreamHeader, DecodeError> {
    let mut cur = Cursor { bytes, pos: 0, base };
    let head = cur.take(HEADER_LEN)?;
    if &head[..4] != BITSTREAM_MAGIC {
        return Err(DecodeError::new("bitstream", base, "bad magic"));
    }
    let codec = CodecId::from_u8(head[4])
        .ok_or_else(|| DecodeError::new("bitstream", base + 4, format!("unknown codec id {}", head[4])))?;
    let quality = head[5];
    if !(1..=100).contains(&quality) {
        return Err(DecodeError::new("bitstream", base + 5, format!("quality {quality} outside 1..=100")));
    }
    let u32_at = |o: usize| u32::from_le_bytes(head[o..o + 4].try_into().expect("4 bytes")) as usize;
    let (width, height, channels, payload_len) = (u32_at(6), u32_at(10), head[14] as usize, u32_at(15));
    if width == 0 || height == 0 || channels == 0 {
        return Err(DecodeError::new("bitstream", base + 6, "zero image dimension"));
    }
    let samples = width.checked_mul(height).and_then(|n| n.checked_mul(channels));
    if samples.is_none_or(|s| s > MAX_SAMPLES) {
        return Err(DecodeError::new("bitstream", base + 6, "image dimensions too large"));
    }
    Ok(BitstreamHeader { params: CodecParams { codec, quality }, width, height, channels, payload_len })
}

pub fn decode(bytes: &[u8]) -> Result<Image> {
    Ok(decode_at(bytes, 0)?)
}

/// Decodes a bitstream embedded at byte `base` of a larger buffer; error
/// offsets are reported relative to that buffer.
pub(crate) fn decode_at(bytes: &[u8], base: usize) -> Result<Image, DecodeError> {
    let hdr = read_header_at(bytes, base)?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != hdr.payload_len {
        return Err(DecodeError::new(
            "bitstream",
            base + 15,
            format!("payload length field {} but {} bytes follow", hdr.payload_len, body.len()),
        ));
    }
    let samples = hdr.width * hdr.height * hdr.channels;
    let mut cur = Cursor { bytes: body, pos: 0, base: base + HEADER_LEN };
    let img = match hdr.params.codec {
        CodecId::Raw => {
            if body.len() != samples {
                return Err(cur.err(format!("raw payload holds {} samples, header implies {samples}", body.len())));
            }
            Image::new(hdr.width, hdr.height, hdr.channels, body.to_vec()).expect("validated size")
        }
        CodecId::Dct => {
            // Every block costs at least two bytes (DC and end-of-block).
            let blocks = hdr.width.div_ceil(8) * hdr.height.div_ceil(8) * hdr.channels;
            if body.len() < 2 * blocks {
                return Err(cur.err(format!("payload too short for {blocks} blocks")));
            }
            decode_dct_payload(&mut cur, hdr.width, hdr.height, hdr.channels, hdr.params.quality)?
        }
    };
    if cur.pos != body.len() && hdr.params.codec == CodecId::Dct {
        return Err(cur.err("trailing bytes after last block"));
    }
    Ok(img)
}
