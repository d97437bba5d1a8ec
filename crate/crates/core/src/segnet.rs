//! U-shaped segmenter trained with a weighted BCE + Dice objective.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_online, AugmentPolicy};
use crate::error::{Error, Result};
use crate::image::{binarize, ImageBuf, MaskBuf, PairSample};
use crate::metrics::{confusion, Confusion};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{
    images_to_tensor, loss_bce, loss_dice, masks_to_tensor, tensor_to_image, LossGrad, Model, OptimKind, OptimState,
    Tensor, UNet, UNetConfig,
};
use crate::par;
use crate::pipeline::DatasetManifest;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossMix {
    pub bce: f64,
    pub dice: f64,
}

impl Default for LossMix {
    fn default() -> Self {
        Self { bce: 0.5, dice: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss_mix: LossMix,
    pub threshold: f64,
    pub input_size: usize,
    pub base_channels: usize,
    /// Share of the shuffled manifest held out for validation (rounded down).
    pub val_fraction: f64,
    pub dice_smooth: f64,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.0001,
            batch_size: 10,
            epochs: 60,
            loss_mix: LossMix::default(),
            threshold: 0.5,
            input_size: 64,
            base_channels: 8,
            val_fraction: 0.2,
            dice_smooth: 1.0,
        }
    }
}

impl SegConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let LossMix { bce, dice } = self.loss_mix;
        if !(bce >= 0.0 && dice >= 0.0) || (bce == 0.0 && dice == 0.0) {
            return bad("loss_mix weights must be >= 0 and not both zero");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("segmenter learning_rate must be > 0");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("segmenter threshold must lie in (0, 1)");
        }
        if self.batch_size == 0 || self.base_channels == 0 {
            return bad("segmenter batch_size and base_channels must be positive");
        }
        if self.input_size == 0 || !self.input_size.is_multiple_of(4) {
            return bad("segmenter input_size must be a positive multiple of 4");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must lie in [0, 1)");
        }
        if self.dice_smooth.is_nan() || self.dice_smooth < 0.0 {
            return bad("dice_smooth must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegModel {
    config: SegConfig,
    net: UNet,
}

impl SegModel {
    pub fn new(config: SegConfig, rng: &SeededRng) -> Result<Self> {
        config.validate()?;
        let net = UNet::new(
            UNetConfig {
                in_channels: 1,
                out_channels: 1,
                base_channels: config.base_channels,
            },
            &mut rng.derive(0),
        );
        Ok(Self { config, net })
    }

    pub fn config(&self) -> &SegConfig {
        &self.config
    }

    pub fn net(&self) -> &UNet {
        &self.net
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_params(
            serde_json::json!({ "kind": "segnet", "config": self.config }),
            self.net.params(),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").and_then(|k| k.as_str()) != Some("segnet") {
            return Err(Error::Data("checkpoint does not hold a segmenter".into()));
        }
        let config: SegConfig = serde_json::from_value(ck.meta["config"].clone())?;
        let mut model = Self::new(config, &SeededRng::new(0))?;
        ck.restore_into(model.net.params_mut())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    fn check_image(&self, image: &ImageBuf) -> Result<()> {
        let s = self.config.input_size;
        if image.dims() != (s, s) {
            return Err(Error::shape(
                "segmenter input",
                &[s, s],
                &[image.height(), image.width()],
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_iou: f64,
    pub val_loss: f64,
    pub val_iou: f64,
}

pub fn log_to_csv(rows: &[SegLogRow]) -> String {
    let mut out = String::from("epoch,train_loss,train_iou,val_loss,val_iou\n");
    for r in rows {
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{:e}\n",
            r.epoch, r.train_loss, r.train_iou, r.val_loss, r.val_iou
        ));
    }
    out
}

/// `w_bce · BCE + w_dice · Dice` and its gradient.
pub fn combined_loss(pred: &Tensor, target: &Tensor, mix: LossMix, smooth: f64) -> Result<LossGrad> {
    let mut grad = Tensor::zeros(pred.shape());
    let mut value = 0.0;
    if mix.bce != 0.0 {
        let mut b = loss_bce(pred, target)?;
        value += mix.bce * b.value;
        b.grad.scale(mix.bce);
        grad.add_assign(&b.grad);
    }
    if mix.dice != 0.0 {
        let mut d = loss_dice(pred, target, smooth)?;
        value += mix.dice * d.value;
        d.grad.scale(mix.dice);
        grad.add_assign(&d.grad);
    }
    Ok(LossGrad { value, grad })
}

fn iou(c: &Confusion) -> f64 {
    let den = c.tp + c.fp + c.fn_;
    if den == 0 {
        0.0
    } else {
        c.tp as f64 / den as f64
    }
}

fn batch_confusion(probs: &Tensor, masks: &[&MaskBuf], threshold: f64) -> Result<Confusion> {
    let mut total = Confusion::default();
    for (i, m) in masks.iter().enumerate() {
        let pred = binarize(&tensor_to_image(probs, i)?, threshold)?;
        total = total + confusion(&pred, m)?;
    }
    Ok(total)
}

fn divergence(epoch: usize) -> Error {
    Error::Divergence {
        step: epoch,
        reason: "segmenter loss is not finite".into(),
    }
}

/// Splits `n` items into (train, validation) index lists after a seeded shuffle.
pub fn split_indices(n: usize, val_fraction: f64, rng: &mut SeededRng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let n_val = (n as f64 * val_fraction).floor() as usize;
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Trains on the pairs a manifest resolves to (paths relative to `root`).
pub fn train_segmenter(
    manifest: &DatasetManifest,
    root: &Path,
    cfg: &SegConfig,
    rng: &SeededRng,
) -> Result<(SegModel, Vec<SegLogRow>)> {
    let pairs = manifest.resolve(root)?;
    train_segmenter_on(&pairs, manifest.online_da.as_ref(), cfg, rng)
}

/// Trains on in-memory pairs. With `online_da`, every training pair is
/// re-augmented each epoch from its own derived stream.
pub fn train_segmenter_on(
    pairs: &[PairSample],
    online_da: Option<&AugmentPolicy>,
    cfg: &SegConfig,
    rng: &SeededRng,
) -> Result<(SegModel, Vec<SegLogRow>)> {
    cfg.validate()?;
    if let Some(p) = online_da {
        p.validate()?;
    }
    let s = cfg.input_size;
    if let Some(p) = pairs.iter().find(|p| p.image().dims() != (s, s)) {
        return Err(Error::shape(
            "segmenter training pair",
            &[s, s],
            &[p.image().height(), p.image().width()],
        ));
    }
    let (train_idx, val_idx) = split_indices(pairs.len(), cfg.val_fraction, &mut rng.derive(1));
    if train_idx.len() < cfg.batch_size {
        return Err(Error::Data(format!(
            "segmenter needs at least {} training pairs, got {}",
            cfg.batch_size,
            train_idx.len()
        )));
    }
    let gray: Vec<ImageBuf> = pairs.iter().map(|p| p.image().to_gray()).collect();
    let mut model = SegModel::new(cfg.clone(), &rng.derive(0))?;
    let mut opt = OptimState::new(OptimKind::adam(), cfg.learning_rate)?;
    let mut order_rng = rng.derive(2);
    let aug_root = rng.derive(3);
    let mut order = train_idx.clone();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        let epoch_rng = aug_root.derive(epoch as u64);
        let batch_pairs: Vec<PairSample> = match online_da {
            Some(policy) => par::map_slice(&order, |&i| {
                let p = PairSample::new(gray[i].clone(), pairs[i].mask().clone(), pairs[i].provenance())?;
                augment_online(&mut epoch_rng.derive(i as u64), &p, policy)
            })
            .into_iter()
            .collect::<Result<_>>()?,
            None => order
                .iter()
                .map(|&i| PairSample::new(gray[i].clone(), pairs[i].mask().clone(), pairs[i].provenance()))
                .collect::<Result<_>>()?,
        };

        let (mut loss_sum, mut seen) = (0.0, 0usize);
        let mut conf = Confusion::default();
        for chunk in batch_pairs.chunks(cfg.batch_size) {
            let images: Vec<&ImageBuf> = chunk.iter().map(|p| p.image()).collect();
            let masks: Vec<&MaskBuf> = chunk.iter().map(|p| p.mask()).collect();
            let x = images_to_tensor(&images)?;
            let t = masks_to_tensor(&masks)?;
            model.net.zero_grad();
            let probs = model.net.forward(&x)?;
            let lg = combined_loss(&probs, &t, cfg.loss_mix, cfg.dice_smooth)?;
            if !lg.value.is_finite() {
                return Err(divergence(epoch));
            }
            model.net.backward(&lg.grad)?;
            opt.step(&mut model.net.params_mut()).map_err(|_| divergence(epoch))?;
            loss_sum += lg.value * chunk.len() as f64;
            seen += chunk.len();
            conf = conf + batch_confusion(&probs, &masks, cfg.threshold)?;
        }

        let (val_loss, val_iou) = if val_idx.is_empty() {
            (0.0, 0.0)
        } else {
            let (mut vsum, mut vconf) = (0.0, Confusion::default());
            for chunk in val_idx.chunks(cfg.batch_size) {
                let images: Vec<&ImageBuf> = chunk.iter().map(|&i| &gray[i]).collect();
                let masks: Vec<&MaskBuf> = chunk.iter().map(|&i| pairs[i].mask()).collect();
                let probs = model.net.infer(&images_to_tensor(&images)?)?;
                let lg = combined_loss(&probs, &masks_to_tensor(&masks)?, cfg.loss_mix, cfg.dice_smooth)?;
                vsum += lg.value * chunk.len() as f64;
                vconf = vconf + batch_confusion(&probs, &masks, cfg.threshold)?;
            }
            (vsum / val_idx.len() as f64, iou(&vconf))
        };
        if !val_loss.is_finite() {
            return Err(divergence(epoch));
        }
        log.push(SegLogRow {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_iou: iou(&conf),
            val_loss,
            val_iou,
        });
    }
    Ok((model, log))
}

/// Foreground probability map.
pub fn predict_probs(model: &SegModel, image: &ImageBuf) -> Result<ImageBuf> {
    model.check_image(image)?;
    let gray = image.to_gray();
    let out = model.net.infer(&images_to_tensor(&[&gray])?)?;
    tensor_to_image(&out, 0)
}

pub fn predict(model: &SegModel, image: &ImageBuf, threshold: f64) -> Result<MaskBuf> {
    binarize(&predict_probs(model, image)?, threshold)
}

/// [`predict`] over many images, parallel across items.
pub fn predict_all(model: &SegModel, images: &[&ImageBuf], threshold: f64) -> Result<Vec<MaskBuf>> {
    par::map_slice(images, |img| predict(model, img, threshold))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Provenance;
    use crate::labelgen::{generate_label, LabelGenConfig};
    use crate::render::{procedural_render, RenderStyle};

    fn pair(size: usize, seed: u64) -> PairSample {
        let mut rng = SeededRng::new(seed);
        let mask = generate_label(&mut rng, &LabelGenConfig::sized(size, size)).unwrap();
        let img = procedural_render(&mask, &RenderStyle::default(), &mut rng).unwrap();
        PairSample::new(img, mask, Provenance::Real).unwrap()
    }

    fn tiny() -> SegConfig {
        SegConfig {
            input_size: 16,
            base_channels: 2,
            batch_size: 2,
            epochs: 2,
            ..SegConfig::default()
        }
    }

    #[test]
    fn combined_loss_is_weighted_sum() {
        let mut rng = SeededRng::new(1);
        let p = Tensor::from_fn(&[2, 1, 4, 4], |_| rng.uniform_range(0.05, 0.95));
        let t = Tensor::from_fn(&[2, 1, 4, 4], |i| (i % 3 == 0) as u8 as f64);
        let mix = LossMix { bce: 0.3, dice: 0.7 };
        let c = combined_loss(&p, &t, mix, 1.0).unwrap();
        let b = loss_bce(&p, &t).unwrap();
        let d = loss_dice(&p, &t, 1.0).unwrap();
        assert_eq!(c.value, 0.3 * b.value + 0.7 * d.value);
        for i in 0..p.len() {
            assert!((c.grad.data()[i] - (0.3 * b.grad.data()[i] + 0.7 * d.grad.data()[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn bce_only_loss_at_optimum_is_near_zero() {
        let t = Tensor::from_fn(&[1, 1, 4, 4], |i| (i % 2) as f64);
        let c = combined_loss(&t, &t, LossMix { bce: 1.0, dice: 0.0 }, 1.0).unwrap();
        assert!(c.value < 1e-6);
    }

    #[test]
    fn invalid_mix_rejected() {
        let cfg = SegConfig {
            loss_mix: LossMix { bce: 0.0, dice: 0.0 },
            ..SegConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_epochs_gives_initial_model() {
        let cfg = SegConfig { epochs: 0, ..tiny() };
        let data: Vec<_> = (0..4).map(|i| pair(16, i)).collect();
        let rng = SeededRng::new(5);
        let (model, log) = train_segmenter_on(&data, None, &cfg, &rng).unwrap();
        assert!(log.is_empty());
        assert_eq!(model, SegModel::new(cfg, &rng.derive(0)).unwrap());
    }

    #[test]
    fn training_is_deterministic_with_online_augmentation() {
        let data: Vec<_> = (0..5).map(|i| pair(16, i)).collect();
        let policy = AugmentPolicy::scaled_to(16);
        let run = || train_segmenter_on(&data, Some(&policy), &tiny(), &SeededRng::new(7)).unwrap();
        let (m1, l1) = run();
        let (m2, l2) = run();
        assert_eq!(l1.len(), 2);
        assert!(l1.iter().all(|r| [r.train_loss, r.train_iou, r.val_loss, r.val_iou]
            .iter()
            .all(|v| v.is_finite())));
        assert_eq!(l1, l2);
        assert_eq!(m1, m2);
    }

    #[test]
    fn too_few_pairs_rejected() {
        let data: Vec<_> = (0..2).map(|i| pair(16, i)).collect();
        let cfg = SegConfig {
            batch_size: 4,
            ..tiny()
        };
        assert!(matches!(
            train_segmenter_on(&data, None, &cfg, &SeededRng::new(0)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn predict_contract() {
        let model = SegModel::new(tiny(), &SeededRng::new(3)).unwrap();
        let p = pair(16, 9);
        let a = predict(&model, p.image(), 0.5).unwrap();
        assert!(a.is_binary());
        assert_eq!(a.dims(), (16, 16));
        assert_eq!(a, predict(&model, p.image(), 0.5).unwrap());
        assert!(predict(&model, &ImageBuf::filled(8, 8, 1, 0.5).unwrap(), 0.5).is_err());
    }

    #[test]
    fn split_is_disjoint_and_complete() {
        let (tr, va) = split_indices(30, 0.2, &mut SeededRng::new(1));
        assert_eq!((tr.len(), va.len()), (24, 6));
        let mut all: Vec<_> = tr.iter().chain(&va).copied().collect();
        all.sort();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }
}
