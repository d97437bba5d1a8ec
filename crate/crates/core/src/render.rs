//! Procedural fiber-carpet renderer.
//!
//! Draws a background of parallel vertical fibers (a column-periodic
//! intensity profile plus Gaussian sensor noise) and brightens defect pixels.
//! It serves as the stand-in "real" image source for experiments and as a
//! known ground truth for the learned translator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageBuf, MaskBuf};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub base_intensity: f64,
    pub stripe_amplitude: f64,
    pub stripe_period: f64,
    pub noise_sigma: f64,
    pub defect_gain: f64,
    pub defect_blur_radius: usize,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            base_intensity: 0.35,
            stripe_amplitude: 0.08,
            stripe_period: 4.0,
            noise_sigma: 0.02,
            defect_gain: 0.4,
            defect_blur_radius: 1,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.base_intensity,
            self.stripe_amplitude,
            self.stripe_period,
            self.noise_sigma,
            self.defect_gain,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("render style values must be finite".into()));
        }
        if self.stripe_amplitude < 0.0 || self.defect_gain < 0.0 || self.noise_sigma < 0.0 {
            return Err(Error::Config("amplitude, gain and noise must be non-negative".into()));
        }
        if self.stripe_period <= 0.0 {
            return Err(Error::Config("stripe period must be positive".into()));
        }
        if self.base_intensity - self.stripe_amplitude < 0.0 {
            return Err(Error::Config("base_intensity - stripe_amplitude must be >= 0".into()));
        }
        if self.base_intensity + self.stripe_amplitude + self.defect_gain > 1.0 {
            return Err(Error::Config(
                "base_intensity + stripe_amplitude + defect_gain must be <= 1".into(),
            ));
        }
        Ok(())
    }

    /// Noise-free background intensity of column `x`.
    pub fn background(&self, x: usize) -> f64 {
        let phase = std::f64::consts::TAU * x as f64 / self.stripe_period;
        self.base_intensity + self.stripe_amplitude * phase.cos()
    }
}

/// Mean over a `(2r+1)²` window; outside the frame counts as zero.
fn box_blur(mask: &MaskBuf, r: usize) -> Vec<f64> {
    let (w, h) = mask.dims();
    let src: Vec<f64> = mask.data().iter().map(|&v| v as f64).collect();
    if r == 0 {
        return src;
    }
    let area = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = src[y * w + lo..=y * w + hi].iter().sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let s: f64 = (lo..=hi).map(|yy| rows[yy * w + x]).sum();
            out[y * w + x] = s / area;
        }
    }
    out
}

/// Intensities before clamping to `[0, 1]`.
pub(crate) fn render_field(mask: &MaskBuf, style: &RenderStyle, rng: &mut SeededRng) -> Vec<f64> {
    let (w, h) = mask.dims();
    let blurred = box_blur(mask, style.defect_blur_radius);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let defect = 0.5 * mask.data()[i] as f64 + 0.5 * blurred[i];
            let noise = if style.noise_sigma > 0.0 {
                style.noise_sigma * rng.normal()
            } else {
                0.0
            };
            out.push(style.background(x) + noise + style.defect_gain * defect);
        }
    }
    out
}

/// Renders a single-channel defect image for `mask`.
///
/// Each defect pixel contributes `gain·(0.5·m + 0.5·blur(m))`, so an
/// isolated sharp defect (`blur = 0`) brightens its pixel by exactly `gain`.
pub fn procedural_render(mask: &MaskBuf, style: &RenderStyle, rng: &mut SeededRng) -> Result<ImageBuf> {
    style.validate()?;
    let (w, h) = mask.dims();
    ImageBuf::from_clamped(w, h, 1, render_field(mask, style, rng))
}
