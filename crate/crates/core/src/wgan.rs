//! Wasserstein GAN over binary label masks, trained with critic weight
//! clipping, plus a binarizing sampler.
//!
//! The generator maps a standard-normal latent vector through a dense layer
//! and three stride-2 transposed convolutions to a `tanh` map, which is
//! shifted to `[0, 1]` by `(y + 1) / 2`. The critic mirrors it with three
//! stride-2 convolutions and a linear score head.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{binarize, ImageBuf, MaskBuf};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{wasserstein_gap, Layer, LayerKind, Model, OptimKind, OptimState, Sequential, Tensor};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WganConfig {
    pub latent_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Generator updates.
    pub total_steps: usize,
    pub clip_c: f64,
    pub n_critic: usize,
    pub binarize_threshold: f64,
    pub mask_size: usize,
    /// Channel width of the first critic layer and last generator layer.
    pub base_channels: usize,
    /// Show the critic hard-thresholded fakes, passing generator gradients
    /// straight through the threshold.
    pub straight_through: bool,
}

impl Default for WganConfig {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            learning_rate: 0.00005,
            batch_size: 32,
            total_steps: 2000,
            clip_c: 0.01,
            n_critic: 5,
            binarize_threshold: 0.5,
            mask_size: 64,
            base_channels: 4,
            straight_through: true,
        }
    }
}

impl WganConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.clip_c <= 0.0 || !self.clip_c.is_finite() {
            return bad("clip_c must be > 0");
        }
        if self.n_critic < 1 {
            return bad("n_critic must be >= 1");
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return bad("binarize_threshold must lie in (0, 1)");
        }
        if self.mask_size < 8 || !self.mask_size.is_multiple_of(8) {
            return bad("mask_size must be a positive multiple of 8");
        }
        if self.latent_dim == 0 || self.batch_size == 0 || self.base_channels == 0 {
            return bad("latent_dim, batch_size and base_channels must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WganModel {
    config: WganConfig,
    generator: Sequential,
    critic: Sequential,
}

/// One row per generator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WganLogRow {
    pub step: usize,
    /// Wasserstein estimate from the last critic update of this step.
    pub gap: f64,
    pub critic_loss: f64,
    pub gen_loss: f64,
    /// Largest |critic parameter| observed right after any critic update of this step.
    pub max_critic_weight: f64,
}

pub fn log_to_csv(rows: &[WganLogRow]) -> String {
    let mut out = String::from("step,gap,critic_loss,gen_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e}\n",
            r.step, r.gap, r.critic_loss, r.gen_loss
        ));
    }
    out
}

impl WganModel {
    pub fn new(config: WganConfig, rng: &SeededRng) -> Result<Self> {
        config.validate()?;
        let c = config.base_channels;
        let s8 = config.mask_size / 8;
        let mut g_rng = rng.derive(0);
        let mut c_rng = rng.derive(1);
        let relu = || Layer::activation(LayerKind::Relu);
        let leak = || Layer::activation(LayerKind::LeakyRelu { slope: 0.2 });
        let generator = Sequential::new(vec![
            Layer::dense(config.latent_dim, 4 * c * s8 * s8, &mut g_rng),
            relu(),
            Layer::activation(LayerKind::Reshape {
                shape: vec![4 * c, s8, s8],
            }),
            Layer::tconv(4 * c, 2 * c, 4, 2, 1, &mut g_rng),
            relu(),
            Layer::tconv(2 * c, c, 4, 2, 1, &mut g_rng),
            relu(),
            Layer::tconv(c, 1, 4, 2, 1, &mut g_rng),
            Layer::activation(LayerKind::Tanh),
        ]);
        let critic = Sequential::new(vec![
            Layer::conv(1, c, 4, 2, 1, &mut c_rng),
            leak(),
            Layer::conv(c, 2 * c, 4, 2, 1, &mut c_rng),
            leak(),
            Layer::conv(2 * c, 4 * c, 4, 2, 1, &mut c_rng),
            leak(),
            Layer::activation(LayerKind::Reshape {
                shape: vec![4 * c * s8 * s8],
            }),
            Layer::dense(4 * c * s8 * s8, 1, &mut c_rng),
        ]);
        Ok(Self {
            config,
            generator,
            critic,
        })
    }

    pub fn config(&self) -> &WganConfig {
        &self.config
    }

    pub fn generator(&self) -> &Sequential {
        &self.generator
    }

    pub fn critic(&self) -> &Sequential {
        &self.critic
    }

    pub fn max_abs_critic_weight(&self) -> f64 {
        self.critic
            .params()
            .iter()
            .map(|p| p.value.max_abs())
            .fold(0.0, f64::max)
    }

    /// Generator output mapped to `[0, 1]`, shape `[n, 1, S, S]`.
    pub fn generate(&self, latent: &Tensor) -> Result<Tensor> {
        Ok(self.generator.infer(latent)?.map(|y| (y + 1.0) / 2.0))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            serde_json::json!({ "kind": "wgan", "config": self.config }),
            self.generator.params().into_iter().chain(self.critic.params()),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("wgan") {
            return Err(Error::Data("checkpoint does not hold a WGAN model".into()));
        }
        let config: WganConfig = serde_json::from_value(ck.meta["config"].clone())?;
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

    fn clip_critic(&mut self) {
        let c = self.config.clip_c;
        for p in self.critic.params_mut() {
            for v in p.value.data_mut() {
                *v = v.clamp(-c, c);
            }
        }
    }
}

fn masks_to_tensor(masks: &[&MaskBuf]) -> Tensor {
    let (w, h) = masks[0].dims();
    let data = masks.iter().flat_map(|m| m.data().iter().map(|&v| v as f64)).collect();
    Tensor::new(vec![masks.len(), 1, h, w], data).expect("uniform mask sizes")
}

fn latent_batch(n: usize, dim: usize, rng: &mut SeededRng) -> Tensor {
    Tensor::randn(&[n, dim], rng)
}

fn ensure_finite(step: usize, what: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            step,
            reason: format!("{what} is not finite"),
        })
    }
}

fn critic_view(fake: &Tensor, cfg: &WganConfig) -> Tensor {
    if cfg.straight_through {
        let t = cfg.binarize_threshold;
        fake.map(|v| if v >= t { 1.0 } else { 0.0 })
    } else {
        fake.clone()
    }
}

/// Trains a WGAN on `masks`.
///
/// Each generator step is preceded by `n_critic` critic updates that ascend
/// `mean(critic(real)) − mean(critic(fake))`; every critic parameter is
/// clipped to `[−clip_c, clip_c]` after each of them. The generator then
/// ascends `mean(critic(fake))`.
pub fn train_wgan(masks: &[MaskBuf], cfg: &WganConfig, rng: &SeededRng) -> Result<(WganModel, Vec<WganLogRow>)> {
    cfg.validate()?;
    if masks.len() < cfg.batch_size {
        return Err(Error::Data(format!(
            "WGAN training needs at least {} masks, got {}",
            cfg.batch_size,
            masks.len()
        )));
    }
    if let Some(m) = masks.iter().find(|m| m.dims() != (cfg.mask_size, cfg.mask_size)) {
        return Err(Error::shape(
            "train_wgan masks",
            &[cfg.mask_size, cfg.mask_size],
            &[m.height(), m.width()],
        ));
    }
    let mut model = WganModel::new(cfg.clone(), &rng.derive(0))?;
    let mut data_rng = rng.derive(1);
    let mut opt_g = OptimState::new(OptimKind::rmsprop(), cfg.learning_rate)?;
    let mut opt_c = OptimState::new(OptimKind::rmsprop(), cfg.learning_rate)?;
    let b = cfg.batch_size;
    let inv_b = 1.0 / b as f64;
    let mut log = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        let mut gap = 0.0;
        let mut max_w: f64 = 0.0;
        for _ in 0..cfg.n_critic {
            let batch: Vec<&MaskBuf> = (0..b)
                .map(|_| &masks[data_rng.below(masks.len() as u64) as usize])
                .collect();
            let real = masks_to_tensor(&batch);
            let fake = model.generate(&latent_batch(b, cfg.latent_dim, &mut data_rng))?;
            let fake = critic_view(&fake, cfg);

            model.critic.zero_grad();
            let real_scores = model.critic.forward(&real)?;
            model.critic.backward(&Tensor::filled(real_scores.shape(), -inv_b))?;
            let fake_scores = model.critic.forward(&fake)?;
            model.critic.backward(&Tensor::filled(fake_scores.shape(), inv_b))?;
            gap = wasserstein_gap(&real_scores, &fake_scores)?;
            ensure_finite(step, "critic gap", gap)?;
            opt_c
                .step(&mut model.critic.params_mut())
                .map_err(|e| with_step(e, step))?;
            model.clip_critic();
            let w = model.max_abs_critic_weight();
            debug_assert!(w <= cfg.clip_c, "critic weight {w} escaped clipping");
            max_w = max_w.max(w);
        }

        let z = latent_batch(b, cfg.latent_dim, &mut data_rng);
        model.generator.zero_grad();
        let raw = model.generator.forward(&z)?;
        let fake = critic_view(&raw.map(|y| (y + 1.0) / 2.0), cfg);
        let scores = model.critic.forward(&fake)?;
        let gen_loss = -scores.mean();
        ensure_finite(step, "generator loss", gen_loss)?;
        let mut d_fake = model.critic.backward(&Tensor::filled(scores.shape(), -inv_b))?;
        d_fake.scale(0.5);
        model.generator.backward(&d_fake)?;
        opt_g
            .step(&mut model.generator.params_mut())
            .map_err(|e| with_step(e, step))?;
        model.critic.zero_grad();

        log.push(WganLogRow {
            step,
            gap,
            critic_loss: -gap,
            gen_loss,
            max_critic_weight: max_w,
        });
    }
    Ok((model, log))
}

fn with_step(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence { reason, .. } => Error::Divergence { step, reason },
        other => other,
    }
}

/// Draws `n` latent vectors, runs the generator and binarizes each output.
pub fn sample_labels(model: &WganModel, n: usize, rng: &mut SeededRng, threshold: f64) -> Result<Vec<MaskBuf>> {
    let s = model.config.mask_size;
    let mut out = Vec::with_capacity(n);
    let mut remaining = n;
    while remaining > 0 {
        let chunk = remaining.min(64);
        let imgs = model.generate(&latent_batch(chunk, model.config.latent_dim, rng))?;
        for i in 0..chunk {
            let img = ImageBuf::from_clamped(s, s, 1, imgs.item(i).to_vec())?;
            out.push(binarize(&img, threshold)?);
        }
        remaining -= chunk;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelgen::{generate_labels, LabelGenConfig};

    fn tiny() -> WganConfig {
        WganConfig {
            latent_dim: 8,
            batch_size: 4,
            total_steps: 3,
            mask_size: 16,
            base_channels: 2,
            ..WganConfig::default()
        }
    }

    fn masks(n: usize) -> Vec<MaskBuf> {
        generate_labels(&SeededRng::new(3), &LabelGenConfig::sized(16, 16), n)
            .unwrap()
            .into_iter()
            .map(|g| g.mask)
            .collect()
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let cfg = WganConfig {
            total_steps: 0,
            ..tiny()
        };
        let rng = SeededRng::new(10);
        let (model, log) = train_wgan(&masks(8), &cfg, &rng).unwrap();
        assert!(log.is_empty());
        assert_eq!(model, WganModel::new(cfg, &rng.derive(0)).unwrap());
    }

    #[test]
    fn clipping_holds_and_training_is_deterministic() {
        let data = masks(8);
        let (a, log_a) = train_wgan(&data, &tiny(), &SeededRng::new(1)).unwrap();
        let (b, log_b) = train_wgan(&data, &tiny(), &SeededRng::new(1)).unwrap();
        assert_eq!(log_a, log_b);
        assert_eq!(a.checkpoint().to_bytes(), b.checkpoint().to_bytes());
        assert!(a.max_abs_critic_weight() <= 0.01);
        assert!(log_a.iter().all(|r| r.gap.is_finite() && r.max_critic_weight <= 0.01));
    }

    #[test]
    fn insufficient_data_rejected() {
        assert!(matches!(
            train_wgan(&masks(3), &tiny(), &SeededRng::new(0)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn sampling_contract() {
        let model = WganModel::new(tiny(), &SeededRng::new(0)).unwrap();
        assert!(sample_labels(&model, 0, &mut SeededRng::new(1), 0.5)
            .unwrap()
            .is_empty());
        let a = sample_labels(&model, 70, &mut SeededRng::new(1), 0.5).unwrap();
        let b = sample_labels(&model, 70, &mut SeededRng::new(1), 0.5).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|m| m.dims() == (16, 16) && m.is_binary()));
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = WganModel::new(tiny(), &SeededRng::new(4)).unwrap();
        let back =
            WganModel::from_checkpoint(&Checkpoint::from_bytes(&model.checkpoint().to_bytes()).unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn csv_header() {
        let csv = log_to_csv(&[WganLogRow {
            step: 0,
            gap: 0.5,
            critic_loss: -0.5,
            gen_loss: 0.1,
            max_critic_weight: 0.01,
        }]);
        assert!(csv.starts_with("step,gap,critic_loss,gen_loss\n0,"));
    }
}
