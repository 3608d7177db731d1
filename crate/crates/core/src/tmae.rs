//! Transformer masked autoencoder: an encoder that sees only the visible
//! patches, a lighter decoder that sees latents plus a shared mask token at
//! every withheld position, and a linear head back to pixel space.

use std::path::Path;

use crate::autodiff::{Tape, Var};
use crate::error::{DecodeError, Error, Result, TensorError};
use crate::image::Image;
use crate::masking::{unpatchify, MaskSpec, PatchGrid};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;
use crate::transformer::{
    add_positional, encoder_block, patch_embed, positional_encoding, xavier, AttentionConfig, BlockConfig, BlockParams,
    TokenSequence, LN_EPS,
};

/// Width, depth and head layout of one transformer stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StackConfig {
    pub d_model: usize,
    pub depth: usize,
    pub heads: usize,
    pub d_ff: usize,
}

impl StackConfig {
    pub fn block(&self) -> BlockConfig {
        BlockConfig { d_model: self.d_model, n_heads: self.heads, d_ff: self.d_ff }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TmaeConfig {
    pub patch_size: usize,
    pub channels: usize,
    pub encoder: StackConfig,
    pub decoder: StackConfig,
}

impl Default for TmaeConfig {
    /// Toy scale: 8×8 RGB patches, a 4-block encoder and 2-block decoder.
    fn default() -> Self {
        Self {
            patch_size: 8,
            channels: 3,
            encoder: StackConfig { d_model: 64, depth: 4, heads: 4, d_ff: 128 },
            decoder: StackConfig { d_model: 32, depth: 2, heads: 4, d_ff: 64 },
        }
    }
}

impl TmaeConfig {
    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.channels == 0 {
            return Err(Error::Config("patch size and channels must be positive".into()));
        }
        if self.encoder.depth < self.decoder.depth {
            return Err(Error::Config(format!(
                "encoder depth {} is shallower than decoder depth {}",
                self.encoder.depth, self.decoder.depth
            )));
        }
        for (name, s) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            s.block().validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
            if s.d_model % 2 != 0 {
                return Err(Error::Config(format!("{name} width {} must be even", s.d_model)));
            }
        }
        Ok(())
    }

    fn enc_attention(&self) -> AttentionConfig {
        AttentionConfig { d_model: self.encoder.d_model, n_heads: self.encoder.heads }
    }

    fn dec_attention(&self) -> AttentionConfig {
        AttentionConfig { d_model: self.decoder.d_model, n_heads: self.decoder.heads }
    }
}

/// All model weights, generic over storage like [`BlockParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct TmaeWeights<T> {
    pub patch_proj: T,
    pub encoder: Vec<BlockParams<T>>,
    pub enc_norm_gain: T,
    pub enc_norm_bias: T,
    pub enc_to_dec: T,
    pub enc_to_dec_bias: T,
    pub mask_token: T,
    pub decoder: Vec<BlockParams<T>>,
    pub head_w: T,
    pub head_b: T,
}

impl<T> TmaeWeights<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> TmaeWeights<U> {
        TmaeWeights {
            patch_proj: f(&self.patch_proj),
            encoder: self.encoder.iter().map(|b| b.map(&mut f)).collect(),
            enc_norm_gain: f(&self.enc_norm_gain),
            enc_norm_bias: f(&self.enc_norm_bias),
            enc_to_dec: f(&self.enc_to_dec),
            enc_to_dec_bias: f(&self.enc_to_dec_bias),
            mask_token: f(&self.mask_token),
            decoder: self.decoder.iter().map(|b| b.map(&mut f)).collect(),
            head_w: f(&self.head_w),
            head_b: f(&self.head_b),
        }
    }

    /// Every tensor in checkpoint order.
    pub fn fields(&self) -> Vec<&T> {
        let mut v = vec![&self.patch_proj];
        for b in &self.encoder {
            v.extend(b.fields());
        }
        v.extend([&self.enc_norm_gain, &self.enc_norm_bias, &self.enc_to_dec, &self.enc_to_dec_bias, &self.mask_token]);
        for b in &self.decoder {
            v.extend(b.fields());
        }
        v.extend([&self.head_w, &self.head_b]);
        v
    }

    pub fn fields_mut(&mut self) -> Vec<&mut T> {
        let mut v = vec![&mut self.patch_proj];
        for b in &mut self.encoder {
            v.extend(b.fields_mut());
        }
        v.extend([
            &mut self.enc_norm_gain,
            &mut self.enc_norm_bias,
            &mut self.enc_to_dec,
            &mut self.enc_to_dec_bias,
            &mut self.mask_token,
        ]);
        for b in &mut self.decoder {
            v.extend(b.fields_mut());
        }
        v.extend([&mut self.head_w, &mut self.head_b]);
        v
    }
}

/// Expected tensor shapes in checkpoint order.
pub fn weight_shapes(cfg: &TmaeConfig) -> Vec<Vec<usize>> {
    let (pl, de, dd) = (cfg.patch_len(), cfg.encoder.d_model, cfg.decoder.d_model);
    let mut v = vec![vec![pl, de]];
    for _ in 0..cfg.encoder.depth {
        v.extend(BlockParams::shapes(&cfg.encoder.block()));
    }
    v.extend([vec![de], vec![de], vec![de, dd], vec![dd], vec![dd]]);
    for _ in 0..cfg.decoder.depth {
        v.extend(BlockParams::shapes(&cfg.decoder.block()));
    }
    v.extend([vec![dd, pl], vec![pl]]);
    v
}

/// A configured model with concrete weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Tmae {
    pub config: TmaeConfig,
    pub weights: TmaeWeights<Tensor>,
}

impl Tmae {
    /// Deterministic initialization from `seed`. The pixel head starts
    /// near zero with a mid-gray bias, so untrained output is close to gray.
    pub fn init(config: TmaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SplitMix64::new(seed);
        let (pl, de, dd) = (config.patch_len(), config.encoder.d_model, config.decoder.d_model);
        let patch_proj = xavier(pl, de, &mut rng);
        let encoder = (0..config.encoder.depth).map(|_| BlockParams::init(&config.encoder.block(), &mut rng)).collect();
        let enc_to_dec = xavier(de, dd, &mut rng);
        let mask_token = Tensor::vector((0..dd).map(|_| 0.02 * rng.normal()).collect());
        let decoder = (0..config.decoder.depth).map(|_| BlockParams::init(&config.decoder.block(), &mut rng)).collect();
        let head_w = Tensor::new(vec![dd, pl], (0..dd * pl).map(|_| 0.02 * rng.normal()).collect())?;
        let weights = TmaeWeights {
            patch_proj,
            encoder,
            enc_norm_gain: Tensor::full(&[de], 1.0),
            enc_norm_bias: Tensor::zeros(&[de]),
            enc_to_dec,
            enc_to_dec_bias: Tensor::zeros(&[dd]),
            mask_token,
            decoder,
            head_w,
            head_b: Tensor::full(&[pl], 0.5),
        };
        Ok(Self { config, weights })
    }

    pub fn from_weights(config: TmaeConfig, weights: TmaeWeights<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = weight_shapes(&config);
        let fields = weights.fields();
        if fields.len() != shapes.len() {
            return Err(Error::Config(format!("expected {} tensors, got {}", shapes.len(), fields.len())));
        }
        for (i, (t, s)) in fields.iter().zip(&shapes).enumerate() {
            if t.shape() != s.as_slice() {
                return Err(Error::Config(format!("tensor {i}: shape {:?}, expected {s:?}", t.shape())));
            }
        }
        Ok(Self { config, weights })
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.fields().iter().map(|t| t.len()).sum()
    }

    /// Puts every weight on the tape, tracked for gradients when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> TmaeWeights<Var> {
        self.weights.map(|t| if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) })
    }

    /// Rounds every weight to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        for t in self.weights.fields_mut() {
            for v in t.data_mut() {
                *v = f64::from(*v as f32);
            }
        }
    }

    /// Predicted patches for every position, ordered by patch index.
    pub fn predict(&self, visible: &Tensor, spec: &MaskSpec) -> Result<Tensor> {
        let mut tape = Tape::new();
        let w = self.bind(&mut tape, false);
        let v = tape.constant(visible.clone());
        let latent = encode_visible(&mut tape, &self.config, &w, v, &spec.keep_indices, spec.n_patches)?;
        let pred = decode_full(&mut tape, &self.config, &w, latent, spec)?;
        Ok(tape.value(pred).clone())
    }

    pub fn encode(&self, visible: &Tensor, positions: &[usize], n_patches: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let w = self.bind(&mut tape, false);
        let v = tape.constant(visible.clone());
        let latent = encode_visible(&mut tape, &self.config, &w, v, positions, n_patches)?;
        Ok(tape.value(latent).clone())
    }

    /// Full patch matrix: received patches verbatim at visible positions,
    /// clamped predictions elsewhere.
    pub fn fill_patches(&self, visible: &Tensor, spec: &MaskSpec) -> Result<Tensor> {
        let pl = self.config.patch_len();
        if visible.shape() != [spec.keep_count, pl] {
            return Err(Error::ModelMismatch(format!(
                "visible patches {:?}, expected [{}, {pl}]",
                visible.shape(),
                spec.keep_count
            )));
        }
        let mut out = Tensor::zeros(&[spec.n_patches, pl]);
        if !spec.masked_indices.is_empty() {
            let pred = self.predict(visible, spec)?;
            for &i in &spec.masked_indices {
                for (o, &p) in out.data_mut()[i * pl..(i + 1) * pl].iter_mut().zip(pred.row(i)) {
                    *o = p.clamp(0.0, 1.0);
                }
            }
        }
        for (slot, &i) in spec.keep_indices.iter().enumerate() {
            out.data_mut()[i * pl..(i + 1) * pl].copy_from_slice(visible.row(slot));
        }
        Ok(out)
    }

    /// Receiver reconstruction of the full image.
    pub fn reconstruct(&self, visible: &Tensor, spec: &MaskSpec, grid: &PatchGrid) -> Result<Image> {
        if grid.patch_size != self.config.patch_size || grid.channels != self.config.channels {
            return Err(Error::ModelMismatch(format!(
                "model expects {}px patches with {} channels, grid has {}px with {}",
                self.config.patch_size, self.config.channels, grid.patch_size, grid.channels
            )));
        }
        if spec.n_patches != grid.n_patches() {
            return Err(Error::Mask(format!("mask covers {} patches, grid has {}", spec.n_patches, grid.n_patches())));
        }
        let full = self.fill_patches(visible, spec)?;
        unpatchify(&full, grid)
    }
}

/// `patch_embed → + PE[positions] → encoder blocks → layer norm`.
pub fn encode_visible(
    tape: &mut Tape,
    cfg: &TmaeConfig,
    w: &TmaeWeights<Var>,
    visible: Var,
    positions: &[usize],
    n_patches: usize,
) -> Result<Var> {
    let rows = tape.value(visible).rows();
    if rows != positions.len() {
        return Err(Error::Mask(format!("{rows} visible patches for {} positions", positions.len())));
    }
    if let Some(&bad) = positions.iter().find(|&&p| p >= n_patches) {
        return Err(Error::Mask(format!("position {bad} out of range for {n_patches} patches")));
    }
    let seq = patch_embed(tape, visible, w.patch_proj)?;
    let mut seq = add_positional(tape, &TokenSequence { tokens: seq.tokens, positions: positions.to_vec() })?;
    for block in &w.encoder {
        seq = encoder_block(tape, &seq, block, cfg.enc_attention())?;
    }
    Ok(tape.layer_norm(seq.tokens, w.enc_norm_gain, w.enc_norm_bias, LN_EPS)?)
}

/// Projects latents to decoder width, inserts the mask token at every
/// masked index, adds full-length positional encoding, runs the decoder
/// blocks and the pixel head. Output rows follow patch index order.
pub fn decode_full(
    tape: &mut Tape,
    cfg: &TmaeConfig,
    w: &TmaeWeights<Var>,
    latent: Var,
    spec: &MaskSpec,
) -> Result<Var> {
    if tape.value(latent).rows() != spec.keep_count || spec.keep_indices.len() != spec.keep_count {
        return Err(Error::Mask(format!(
            "latent has {} rows, mask keeps {}",
            tape.value(latent).rows(),
            spec.keep_count
        )));
    }
    let projected = tape.matmul(latent, w.enc_to_dec)?;
    let projected = tape.add_row(projected, w.enc_to_dec_bias)?;
    let flags = spec.visible_flags();
    let mut slot = 0;
    let picks: Vec<(usize, usize)> = flags
        .iter()
        .map(|&visible| {
            if visible {
                slot += 1;
                (0, slot - 1)
            } else {
                (1, 0)
            }
        })
        .collect();
    let tokens = tape.gather_rows(&[projected, w.mask_token], &picks)?;
    let pe = tape.constant(positional_encoding(spec.n_patches, cfg.decoder.d_model)?);
    let tokens = tape.add(tokens, pe)?;
    let mut seq = TokenSequence { tokens, positions: (0..spec.n_patches).collect() };
    for block in &w.decoder {
        seq = encoder_block(tape, &seq, block, cfg.dec_attention())?;
    }
    let out = tape.matmul(seq.tokens, w.head_w)?;
    Ok(tape.add_row(out, w.head_b)?)
}

/// Mean squared error over the masked rows only.
pub fn masked_mse(tape: &mut Tape, pred: Var, target: Var, spec: &MaskSpec) -> Result<Var> {
    if tape.value(pred).shape() != tape.value(target).shape() {
        return Err(TensorError::shape("masked_mse", tape.value(pred).shape(), tape.value(target).shape()).into());
    }
    if spec.masked_indices.is_empty() {
        return Err(TensorError::Contract("masked_mse over an empty masked set").into());
    }
    let p = tape.select_rows(pred, &spec.masked_indices)?;
    let t = tape.select_rows(target, &spec.masked_indices)?;
    let diff = tape.sub(p, t)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq))
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"TMCK";
const CHECKPOINT_VERSION: u8 = 1;
const MAX_DIM: u32 = 1 << 16;

/// Serializes the model: `"TMCK"`, version byte, ten little-endian `u32`
/// config fields (patch size, channels, then width/depth/heads/ff for the
/// encoder and the decoder), then every tensor in checkpoint order as
/// `rank: u8`, `dims: u32 × rank`, `f32` values.
pub fn checkpoint_bytes(model: &Tmae) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::with_capacity(64 + 4 * model.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    let fields = [
        c.patch_size,
        c.channels,
        c.encoder.d_model,
        c.encoder.depth,
        c.encoder.heads,
        c.encoder.d_ff,
        c.decoder.d_model,
        c.decoder.depth,
        c.decoder.heads,
        c.decoder.d_ff,
    ];
    for f in fields {
        out.extend_from_slice(&(f as u32).to_le_bytes());
    }
    for t in model.weights.fields() {
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.bytes.len() - self.pos < n {
            return Err(DecodeError::new(self.what, self.pos, format!("truncated, needed {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Tmae> {
    let mut r = Reader { bytes, pos: 0, what: "checkpoint" };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(DecodeError::new("checkpoint", 0, "bad magic").into());
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return Err(DecodeError::new("checkpoint", 4, format!("unsupported version {version}")).into());
    }
    let mut f = [0usize; 10];
    for slot in f.iter_mut() {
        let at = r.pos;
        let v = r.u32()?;
        if v > MAX_DIM {
            return Err(DecodeError::new("checkpoint", at, format!("config field {v} too large")).into());
        }
        *slot = v as usize;
    }
    let config = TmaeConfig {
        patch_size: f[0],
        channels: f[1],
        encoder: StackConfig { d_model: f[2], depth: f[3], heads: f[4], d_ff: f[5] },
        decoder: StackConfig { d_model: f[6], depth: f[7], heads: f[8], d_ff: f[9] },
    };
    config.validate()?;
    let shapes = weight_shapes(&config);
    let mut tensors = Vec::with_capacity(shapes.len());
    for (i, want) in shapes.iter().enumerate() {
        let at = r.pos;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if &dims != want {
            return Err(DecodeError::new(
                "checkpoint",
                at,
                format!("tensor {i} has shape {dims:?}, config implies {want:?}"),
            )
            .into());
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n * 4)?;
        let data = raw.chunks_exact(4).map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes")))).collect();
        tensors.push(Tensor::new(dims, data)?);
    }
    if r.pos != bytes.len() {
        return Err(DecodeError::new("checkpoint", r.pos, "trailing bytes").into());
    }
    let mut template = Tmae::init_zeroed(config);
    for (slot, t) in template.weights.fields_mut().into_iter().zip(tensors) {
        *slot = t;
    }
    Ok(template)
}

impl Tmae {
    fn init_zeroed(config: TmaeConfig) -> Self {
        let (pl, de, dd) = (config.patch_len(), config.encoder.d_model, config.decoder.d_model);
        let weights = TmaeWeights {
            patch_proj: Tensor::zeros(&[pl, de]),
            encoder: (0..config.encoder.depth).map(|_| BlockParams::zeros(&config.encoder.block())).collect(),
            enc_norm_gain: Tensor::zeros(&[de]),
            enc_norm_bias: Tensor::zeros(&[de]),
            enc_to_dec: Tensor::zeros(&[de, dd]),
            enc_to_dec_bias: Tensor::zeros(&[dd]),
            mask_token: Tensor::zeros(&[dd]),
            decoder: (0..config.decoder.depth).map(|_| BlockParams::zeros(&config.decoder.block())).collect(),
            head_w: Tensor::zeros(&[dd, pl]),
            head_b: Tensor::zeros(&[pl]),
        };
        Self { config, weights }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, checkpoint_bytes(self))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        checkpoint_from_bytes(&bytes).map_err(|e| Error::File { path: path.to_owned(), reason: e.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masking::generate_mask;

    fn tiny() -> TmaeConfig {
        TmaeConfig {
            patch_size: 2,
            channels: 1,
            encoder: StackConfig { d_model: 8, depth: 2, heads: 2, d_ff: 8 },
            decoder: StackConfig { d_model: 4, depth: 1, heads: 2, d_ff: 8 },
        }
    }

    fn random_patches(n: usize, len: usize, seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::new(vec![n, len], (0..n * len).map(|_| rng.next_f64()).collect()).unwrap()
    }

    #[test]
    fn config_rules() {
        assert!(TmaeConfig::default().validate().is_ok());
        let mut c = tiny();
        c.decoder.depth = 3;
        assert!(c.validate().is_err());
        let mut c = tiny();
        c.encoder.heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn encode_shapes_and_errors() {
        let m = Tmae::init(tiny(), 1).unwrap();
        let v = random_patches(3, 4, 2);
        let lat = m.encode(&v, &[0, 4, 7], 9).unwrap();
        assert_eq!(lat.shape(), &[3, 8]);
        assert!(m.encode(&v, &[0, 4, 9], 9).is_err());
        assert!(m.encode(&v, &[0, 4], 9).is_err());
    }

    #[test]
    fn decode_outputs_one_row_per_patch() {
        let m = Tmae::init(tiny(), 1).unwrap();
        let spec = generate_mask(3, 9, 0.6).unwrap();
        let v = random_patches(spec.keep_count, 4, 4);
        assert_eq!(m.predict(&v, &spec).unwrap().shape(), &[9, 4]);
    }

    #[test]
    fn masked_mse_examples() {
        let spec = MaskSpec::from_keep_count(1, 4, 2).unwrap();
        let target = random_patches(4, 3, 5);
        let mut tape = Tape::new();
        let t = tape.constant(target.clone());
        let same = tape.constant(target.clone());
        let l = masked_mse(&mut tape, same, t, &spec).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);

        let mut shifted = target.clone();
        for &i in &spec.masked_indices {
            for v in &mut shifted.data_mut()[i * 3..(i + 1) * 3] {
                *v += 0.25;
            }
        }
        for &i in &spec.keep_indices {
            for v in &mut shifted.data_mut()[i * 3..(i + 1) * 3] {
                *v -= 7.0;
            }
        }
        let p = tape.constant(shifted);
        let l = masked_mse(&mut tape, p, t, &spec).unwrap();
        assert!((tape.value(l).data()[0] - 0.0625).abs() < 1e-15);

        let all = MaskSpec::from_keep_count(1, 4, 4).unwrap();
        assert!(masked_mse(&mut tape, p, t, &all).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact_after_rounding() {
        let mut m = Tmae::init(tiny(), 9).unwrap();
        m.round_to_f32();
        let bytes = checkpoint_bytes(&m);
        assert_eq!(&bytes[..4], b"TMCK");
        assert_eq!(bytes[4], 1);
        let back = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        let spec = generate_mask(3, 9, 0.5).unwrap();
        let v = random_patches(spec.keep_count, 4, 4);
        assert_eq!(m.predict(&v, &spec).unwrap(), back.predict(&v, &spec).unwrap());
    }

    #[test]
    fn checkpoint_rejects_damage() {
        let m = Tmae::init(tiny(), 9).unwrap();
        let bytes = checkpoint_bytes(&m);
        for cut in [0, 3, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(checkpoint_from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(checkpoint_from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[9] = 9; // channels
        assert!(checkpoint_from_bytes(&bad).is_err());
    }
}
