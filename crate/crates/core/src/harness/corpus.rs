//! Binary PPM (P6) / PGM (P5) reading and writing, and directory corpora.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;

/// Images of a directory in filename order, plus the files that failed.
#[derive(Debug, Default)]
pub struct Corpus {
    /// `(file stem, image)`.
    pub images: Vec<(String, Image)>,
    pub errors: Vec<(PathBuf, Error)>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn is_pnm(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("ppm" | "pgm" | "pnm")
    )
}

/// Loads every `.ppm`/`.pgm`/`.pnm` file in `dir`. A malformed file is
/// recorded in [`Corpus::errors`] and loading continues.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file() && is_pnm(p)).collect();
    paths.sort();
    let mut corpus = Corpus::default();
    for path in paths {
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_owned();
        match std::fs::read(&path).map_err(Error::from).and_then(|b| read_pnm(&b)) {
            Ok(img) => corpus.images.push((id, img)),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                let reason = e.to_string();
                corpus.errors.push((path.clone(), Error::File { path, reason }));
            }
        }
    }
    if corpus.images.is_empty() {
        log::warn!("no readable PPM/PGM images in {}", dir.display());
    }
    Ok(corpus)
}

struct HeaderScanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderScanner<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Image(format!("PNM header: bad {what} at byte {start}")))
    }
}

/// Decodes a binary P6 or P5 image with maxval up to 255; smaller maxvals
/// are rescaled to the full 8-bit range.
pub fn read_pnm(bytes: &[u8]) -> Result<Image> {
    let channels = match bytes.get(..2) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(Error::Image("not a binary PPM/PGM (expected P6 or P5)".into())),
    };
    let mut s = HeaderScanner { bytes, pos: 2 };
    let width = s.number("width")?;
    let height = s.number("height")?;
    let maxval = s.number("maxval")?;
    if !(1..=255).contains(&maxval) {
        return Err(Error::Image(format!("PNM maxval {maxval} unsupported (8-bit only)")));
    }
    if !bytes.get(s.pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Image("PNM header not followed by whitespace".into()));
    }
    let start = s.pos + 1;
    let need = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::Image("PNM dimensions overflow".into()))?;
    let raster = bytes
        .get(start..start + need)
        .ok_or_else(|| Error::Image(format!("PNM raster truncated: need {need} bytes after byte {start}")))?;
    let data = if maxval == 255 {
        raster.to_vec()
    } else {
        raster
            .iter()
            .map(|&v| ((u32::from(v.min(maxval as u8)) * 255 + maxval as u32 / 2) / maxval as u32) as u8)
            .collect()
    };
    Image::new(width, height, channels, data)
}

/// P6 for 3-channel images, P5 for single-channel ones.
pub fn write_pnm(img: &Image) -> Result<Vec<u8>> {
    let magic = match img.channels() {
        3 => "P6",
        1 => "P5",
        c => return Err(Error::Image(format!("PNM supports 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.data());
    Ok(out)
}

pub fn save_pnm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, write_pnm(img)?)?;
    Ok(())
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    read_pnm(&bytes).map_err(|e| Error::File { path: path.to_owned(), reason: e.to_string() })
}
