//! Toy-scale training of the masked autoencoder with Adam.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::masking::{generate_mask, patchify};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;
use crate::tmae::{decode_full, encode_visible, masked_mse, Tmae, TmaeConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Side of the square random crops.
    pub crop_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Masking ratio is drawn uniformly from this range once per batch.
    pub mask_ratio_range: (f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            crop_size: 64,
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            mask_ratio_range: (0.5, 0.8),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.mask_ratio_range;
        let ok = self.crop_size > 0
            && self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.epsilon > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0
            && (0.0..1.0).contains(&lo)
            && (0.0..1.0).contains(&hi)
            && lo <= hi;
        if !ok {
            return Err(Error::Config(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

/// Loss history of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainLog {
    /// Masked MSE of the untrained model on the probe set.
    pub initial_loss: f64,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &Tmae) -> Self {
        let sizes: Vec<usize> = model.weights.fields().iter().map(|t| t.len()).collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut Tmae, grads: &[Vec<f64>], cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        for (((param, g), m), v) in model.weights.fields_mut().into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v)
        {
            for (((p, &g), m), v) in param.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= cfg.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
            }
        }
    }
}

/// One training example: all patches of a crop plus its mask.
struct Sample {
    patches: Tensor,
    mask: crate::masking::MaskSpec,
}

fn make_sample(img: &Image, crop: usize, p: usize, ratio: f64, rng: &mut SplitMix64) -> Result<Sample> {
    let x0 = rng.below((img.width() - crop + 1) as u64) as usize;
    let y0 = rng.below((img.height() - crop + 1) as u64) as usize;
    let cropped = img.crop_at(x0, y0, crop, crop)?;
    let (patches, grid) = patchify(&cropped, p)?;
    let mask = generate_mask(rng.next_u64(), grid.n_patches(), ratio)?;
    Ok(Sample { patches, mask })
}

/// Loss and, when requested, gradients in checkpoint order.
pub(crate) fn loss_and_grads(
    model: &Tmae,
    patches: &Tensor,
    mask: &crate::masking::MaskSpec,
    with_grads: bool,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let w = model.bind(&mut tape, with_grads);
    let target = tape.constant(patches.clone());
    let visible = tape.select_rows(target, &mask.keep_indices)?;
    let latent = encode_visible(&mut tape, &model.config, &w, visible, &mask.keep_indices, mask.n_patches)?;
    let pred = decode_full(&mut tape, &model.config, &w, latent, mask)?;
    let loss = masked_mse(&mut tape, pred, target, mask)?;
    let value = tape.value(loss).data()[0];
    if !with_grads {
        return Ok((value, Vec::new()));
    }
    let g = tape.backward(loss)?;
    let grads = w
        .fields()
        .iter()
        .map(|&&v| g.get(v).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; tape.value(v).len()]))
        .collect();
    Ok((value, grads))
}

/// Trains a fresh model. Deterministic for a given corpus, configuration
/// and seed; the returned weights are rounded to checkpoint precision.
pub fn train(corpus: &[Image], model_config: TmaeConfig, cfg: &TrainConfig) -> Result<(Tmae, TrainLog)> {
    cfg.validate()?;
    model_config.validate()?;
    if !cfg.crop_size.is_multiple_of(model_config.patch_size) {
        return Err(Error::Config(format!(
            "crop size {} is not a multiple of patch size {}",
            cfg.crop_size, model_config.patch_size
        )));
    }
    let usable: Vec<&Image> = corpus
        .iter()
        .filter(|img| {
            img.width() >= cfg.crop_size && img.height() >= cfg.crop_size && img.channels() == model_config.channels
        })
        .collect();
    if usable.is_empty() {
        return Err(Error::Config(format!(
            "no corpus image has {} channels and is at least {}x{}",
            model_config.channels, cfg.crop_size, cfg.crop_size
        )));
    }
    if usable.len() < corpus.len() {
        log::warn!("training on {} of {} images (others too small or wrong channel count)", usable.len(), corpus.len());
    }

    let mut rng = SplitMix64::new(cfg.seed);
    let mut model = Tmae::init(model_config, rng.next_u64())?;
    let p = model_config.patch_size;
    let (lo, hi) = cfg.mask_ratio_range;

    let mut probe_rng = SplitMix64::new(cfg.seed ^ 0xA5A5_A5A5);
    let probe: Vec<Sample> = usable
        .iter()
        .take(32)
        .map(|img| make_sample(img, cfg.crop_size, p, (lo + hi) / 2.0, &mut probe_rng))
        .collect::<Result<_>>()?;
    let initial_loss = mean_loss(&model, &probe)?;
    log::info!("initial masked loss {initial_loss:.6}");

    let mut adam = Adam::new(&model);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for epoch in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.below(i as u64 + 1) as usize);
        }
        let mut total = 0.0;
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let ratio = rng.uniform(lo, hi);
            let mut acc: Vec<Vec<f64>> = Vec::new();
            for &idx in batch {
                let s = make_sample(usable[idx], cfg.crop_size, p, ratio, &mut rng)?;
                if s.mask.masked_indices.is_empty() {
                    continue;
                }
                let (loss, grads) = loss_and_grads(&model, &s.patches, &s.mask, true)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, step, loss });
                }
                total += loss;
                if acc.is_empty() {
                    acc = grads;
                } else {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        for (x, y) in a.iter_mut().zip(g) {
                            *x += y;
                        }
                    }
                }
            }
            if acc.is_empty() {
                continue;
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                for x in a.iter_mut() {
                    *x *= scale;
                }
            }
            adam.update(&mut model, &acc, cfg);
        }
        let mean = total / usable.len() as f64;
        log::info!("epoch {}/{}: mean masked loss {mean:.6}", epoch + 1, cfg.epochs);
        epoch_losses.push(mean);
    }
    model.round_to_f32();
    Ok((model, TrainLog { initial_loss, epoch_losses }))
}

fn mean_loss(model: &Tmae, samples: &[Sample]) -> Result<f64> {
    let mut total = 0.0;
    for s in samples {
        total += loss_and_grads(model, &s.patches, &s.mask, false)?.0;
    }
    Ok(total / samples.len() as f64)
}

/// Masked-region MSE in `[0,1]` pixel units of the model's clamped
/// predictions and of a mid-gray fill, over whole images with fresh masks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InpaintScore {
    pub model_mse: f64,
    pub gray_mse: f64,
}

impl InpaintScore {
    /// Fractional improvement over gray fill.
    pub fn improvement(&self) -> f64 {
        1.0 - self.model_mse / self.gray_mse
    }
}

pub fn inpaint_score(model: &Tmae, images: &[Image], mask_ratio: f64, seed: u64) -> Result<InpaintScore> {
    let mut rng = SplitMix64::new(seed);
    let (mut model_sse, mut gray_sse, mut count) = (0.0, 0.0, 0usize);
    for img in images {
        let (patches, grid) = patchify(img, model.config.patch_size)?;
        let mask = generate_mask(rng.next_u64(), grid.n_patches(), mask_ratio)?;
        let visible = {
            let mut tape = Tape::new();
            let t = tape.constant(patches.clone());
            let v = tape.select_rows(t, &mask.keep_indices)?;
            tape.value(v).clone()
        };
        let pred = model.predict(&visible, &mask)?;
        for &i in &mask.masked_indices {
            for (&p, &t) in pred.row(i).iter().zip(patches.row(i)) {
                model_sse += (p.clamp(0.0, 1.0) - t).powi(2);
                gray_sse += (0.5 - t).powi(2);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Config("no masked patches to score".into()));
    }
    Ok(InpaintScore { model_mse: model_sse / count as f64, gray_mse: gray_sse / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::synth::synthetic_image;
    use crate::tmae::StackConfig;

    fn tiny() -> TmaeConfig {
        TmaeConfig {
            patch_size: 4,
            channels: 3,
            encoder: StackConfig { d_model: 16, depth: 1, heads: 2, d_ff: 16 },
            decoder: StackConfig { d_model: 8, depth: 1, heads: 2, d_ff: 8 },
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { beta1: 1.0, ..TrainConfig::default() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { mask_ratio_range: (0.8, 0.5), ..TrainConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_unusable_corpus() {
        let small = vec![synthetic_image(1, 8, 8)];
        let cfg = TrainConfig { crop_size: 16, epochs: 1, ..TrainConfig::default() };
        assert!(train(&small, tiny(), &cfg).is_err());
        assert!(train(&[], tiny(), &cfg).is_err());
    }

    #[test]
    fn same_seed_same_weights() {
        let corpus: Vec<Image> = (0..6).map(|i| synthetic_image(i, 20, 20)).collect();
        let cfg = TrainConfig { crop_size: 16, epochs: 2, batch_size: 3, seed: 4, ..TrainConfig::default() };
        let (a, la) = train(&corpus, tiny(), &cfg).unwrap();
        let (b, lb) = train(&corpus, tiny(), &cfg).unwrap();
        assert_eq!(crate::tmae::checkpoint_bytes(&a), crate::tmae::checkpoint_bytes(&b));
        assert_eq!(la, lb);
        assert_eq!(la.epoch_losses.len(), 2);
    }
}
