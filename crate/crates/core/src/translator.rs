//! Conditional adversarial mask-to-image translator.
//!
//! The generator is a three-level [`UNet`] taking a mask and producing an
//! image; the critic scores `(mask, image)` pairs patch-wise. The generator
//! objective is `adv_weight · adversarial + l1_weight · L1(fake, real)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuf, MaskBuf, PairSample};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{
    images_to_tensor, loss_bce, loss_l1, loss_mse, masks_to_tensor, tensor_to_image, Layer, LayerKind, LossGrad, Model,
    OptimKind, OptimState, Sequential, Tensor, UNet, UNetConfig,
};
use crate::par;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialMode {
    /// Squared error against 1 (real) and 0 (fake) targets.
    #[default]
    LeastSquares,
    /// Sigmoid critic scores with binary cross-entropy.
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslatorConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l1_weight: f64,
    pub adv_weight: f64,
    pub adversarial_mode: AdversarialMode,
    pub image_size: usize,
    pub image_channels: usize,
    pub base_channels: usize,
    pub critic_channels: usize,
}

impl Default for TranslatorConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            batch_size: 1,
            epochs: 50,
            l1_weight: 100.0,
            adv_weight: 1.0,
            adversarial_mode: AdversarialMode::LeastSquares,
            image_size: 64,
            image_channels: 1,
            base_channels: 8,
            critic_channels: 8,
        }
    }
}

impl TranslatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("translator learning_rate must be > 0");
        }
        if !(self.l1_weight >= 0.0 && self.adv_weight >= 0.0) {
            return bad("translator loss weights must be >= 0");
        }
        if self.l1_weight == 0.0 && self.adv_weight == 0.0 {
            return bad("translator l1_weight and adv_weight are both zero");
        }
        if self.batch_size == 0 || self.base_channels == 0 || self.critic_channels == 0 {
            return bad("translator batch_size and channel widths must be positive");
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(4) {
            return bad("translator image_size must be a positive multiple of 4");
        }
        if self.image_channels != 1 && self.image_channels != 3 {
            return bad("translator image_channels must be 1 or 3");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslatorModel {
    config: TranslatorConfig,
    generator: UNet,
    critic: Sequential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslatorLogRow {
    pub epoch: usize,
    /// Mean unweighted adversarial term of the generator objective.
    pub adv_loss: f64,
    /// Mean L1 between translated and real images.
    pub l1_loss: f64,
    pub critic_loss: f64,
}

pub fn log_to_csv(rows: &[TranslatorLogRow]) -> String {
    let mut out = String::from("epoch,adv_loss,l1_loss,critic_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            r.epoch, r.adv_loss, r.l1_loss, r.critic_loss
        ));
    }
    out
}

impl TranslatorModel {
    pub fn new(config: TranslatorConfig, rng: &SeededRng) -> Result<Self> {
        config.validate()?;
        let generator = UNet::new(
            UNetConfig {
                in_channels: 1,
                out_channels: config.image_channels,
                base_channels: config.base_channels,
            },
            &mut rng.derive(0),
        );
        let mut c_rng = rng.derive(1);
        let c = config.critic_channels;
        let leak = || Layer::activation(LayerKind::LeakyRelu { slope: 0.2 });
        let mut layers = vec![
            Layer::conv(1 + config.image_channels, c, 4, 2, 1, &mut c_rng),
            leak(),
            Layer::conv(c, 2 * c, 4, 2, 1, &mut c_rng),
            leak(),
            Layer::conv(2 * c, 1, 3, 1, 1, &mut c_rng),
        ];
        if config.adversarial_mode == AdversarialMode::Logistic {
            layers.push(Layer::activation(LayerKind::Sigmoid));
        }
        Ok(Self {
            config,
            generator,
            critic: Sequential::new(layers),
        })
    }

    pub fn config(&self) -> &TranslatorConfig {
        &self.config
    }

    pub fn generator(&self) -> &UNet {
        &self.generator
    }

    pub fn critic(&self) -> &Sequential {
        &self.critic
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            serde_json::json!({ "kind": "translator", "config": self.config }),
            self.generator.params().into_iter().chain(self.critic.params()),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("translator") {
            return Err(Error::Data("checkpoint does not hold a translator model".into()));
        }
        let config: TranslatorConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let mut model = Self::new(config, &SeededRng::new(0))?;
        let params = model
            .generator
            .params_mut()
            .into_iter()
            .chain(model.critic.params_mut())
            .collect();
        ck.restore_into(params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn adversarial(mode: AdversarialMode, scores: &Tensor, target: f64) -> Result<LossGrad> {
    let t = Tensor::filled(scores.shape(), target);
    match mode {
        AdversarialMode::LeastSquares => {
            let mut lg = loss_mse(scores, &t)?;
            lg.value *= 0.5;
            lg.grad.scale(0.5);
            Ok(lg)
        }
        AdversarialMode::Logistic => loss_bce(scores, &t),
    }
}

fn divergence(epoch: usize, what: &str) -> Error {
    Error::Divergence {
        step: epoch,
        reason: format!("translator {what} is not finite"),
    }
}

/// Trains a translator on `pairs`; one log row per epoch. Divergence errors
/// carry the epoch index.
pub fn train_translator(
    pairs: &[PairSample],
    cfg: &TranslatorConfig,
    rng: &SeededRng,
) -> Result<(TranslatorModel, Vec<TranslatorLogRow>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Data("translator training needs at least one pair".into()));
    }
    let s = cfg.image_size;
    for p in pairs {
        if p.image().dims() != (s, s) || p.image().channels() != cfg.image_channels {
            return Err(Error::shape(
                "translator training pair",
                &[cfg.image_channels, s, s],
                &[p.image().channels(), p.image().height(), p.image().width()],
            ));
        }
    }
    let mut model = TranslatorModel::new(cfg.clone(), &rng.derive(0))?;
    let mut order_rng = rng.derive(1);
    let adam = OptimKind::Adam {
        beta1: 0.5,
        beta2: 0.999,
        eps: 1e-8,
    };
    let mut opt_g = OptimState::new(adam, cfg.learning_rate)?;
    let mut opt_d = OptimState::new(adam, cfg.learning_rate)?;
    let use_adv = cfg.adv_weight > 0.0;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..pairs.len()).collect();

    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let (mut sum_adv, mut sum_l1, mut sum_d, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let masks: Vec<&MaskBuf> = chunk.iter().map(|&i| pairs[i].mask()).collect();
            let images: Vec<&ImageBuf> = chunk.iter().map(|&i| pairs[i].image()).collect();
            let m = masks_to_tensor(&masks)?;
            let real = images_to_tensor(&images)?;

            model.generator.zero_grad();
            let fake = model.generator.forward(&m)?;

            if use_adv {
                model.critic.zero_grad();
                let real_scores = model.critic.forward(&Tensor::concat_channels(&m, &real)?)?;
                let lr = adversarial(cfg.adversarial_mode, &real_scores, 1.0)?;
                model.critic.backward(&lr.grad)?;
                let fake_scores = model.critic.forward(&Tensor::concat_channels(&m, &fake)?)?;
                let lf = adversarial(cfg.adversarial_mode, &fake_scores, 0.0)?;
                model.critic.backward(&lf.grad)?;
                let d_loss = 0.5 * (lr.value + lf.value);
                if !d_loss.is_finite() {
                    return Err(divergence(epoch, "critic loss"));
                }
                sum_d += d_loss;
                opt_d
                    .step(&mut model.critic.params_mut())
                    .map_err(|_| divergence(epoch, "critic gradient"))?;
            }

            let l1 = loss_l1(&fake, &real)?;
            let mut grad = l1.grad.clone();
            grad.scale(cfg.l1_weight);
            if use_adv {
                let scores = model.critic.forward(&Tensor::concat_channels(&m, &fake)?)?;
                let adv = adversarial(cfg.adversarial_mode, &scores, 1.0)?;
                let d_in = model.critic.backward(&adv.grad)?;
                let (_, mut d_fake) = d_in.split_channels(1);
                d_fake.scale(cfg.adv_weight);
                grad.add_assign(&d_fake);
                sum_adv += adv.value;
            }
            if !(l1.value.is_finite() && sum_adv.is_finite()) {
                return Err(divergence(epoch, "generator loss"));
            }
            sum_l1 += l1.value;
            model.generator.backward(&grad)?;
            opt_g
                .step(&mut model.generator.params_mut())
                .map_err(|_| divergence(epoch, "generator gradient"))?;
            model.critic.zero_grad();
            batches += 1;
        }
        let n = batches as f64;
        log.push(TranslatorLogRow {
            epoch,
            adv_loss: sum_adv / n,
            l1_loss: sum_l1 / n,
            critic_loss: sum_d / n,
        });
    }
    Ok((model, log))
}

/// Deterministic forward pass of the generator.
pub fn translate(model: &TranslatorModel, mask: &MaskBuf) -> Result<ImageBuf> {
    let s = model.config.image_size;
    if mask.dims() != (s, s) {
        return Err(Error::shape("translate mask", &[s, s], &[mask.height(), mask.width()]));
    }
    let out = model.generator.infer(&masks_to_tensor(&[mask])?)?;
    tensor_to_image(&out, 0)
}

/// [`translate`] over many masks, parallel across items.
pub fn translate_all(model: &TranslatorModel, masks: &[MaskBuf]) -> Result<Vec<ImageBuf>> {
    par::map_slice(masks, |m| translate(model, m)).into_iter().collect()
}

/// Mean per-pair L1 between translated masks and their paired images.
pub fn mean_l1(model: &TranslatorModel, pairs: &[PairSample]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("mean_l1 over an empty set".into()));
    }
    let per: Vec<Result<f64>> = par::map_slice(pairs, |p| translate(model, p.mask())?.mean_abs_diff(p.image()));
    let mut total = 0.0;
    for v in per {
        total += v?;
    }
    Ok(total / pairs.len() as f64)
}
