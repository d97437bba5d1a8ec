//! Scalar losses with their gradients with respect to the prediction.

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const BCE_EPS: f64 = 1e-7;

/// A loss value and `∂loss/∂pred`.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Tensor,
}

fn check(pred: &Tensor, target: &Tensor, context: &'static str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape(context, pred.shape(), target.shape()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument(format!("{context}: empty input")));
    }
    Ok(())
}

/// Mean binary cross-entropy, predictions clamped to `[ε, 1-ε]`.
pub fn loss_bce(pred: &Tensor, target: &Tensor) -> Result<LossGrad> {
    check(pred, target, "loss_bce")?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let clamped = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        value -= t * clamped.ln() + (1.0 - t) * (1.0 - clamped).ln();
        let g = if p > BCE_EPS && p < 1.0 - BCE_EPS {
            (clamped - t) / (clamped * (1.0 - clamped))
        } else {
            0.0
        };
        grad.push(g / n);
    }
    Ok(LossGrad {
        value: value / n,
        grad: Tensor::new(pred.shape().to_vec(), grad)?,
    })
}

/// Soft Dice loss `1 − (2Σpt + s) / (Σp + Σt + s)`.
pub fn loss_dice(pred: &Tensor, target: &Tensor, smooth: f64) -> Result<LossGrad> {
    check(pred, target, "loss_dice")?;
    let inter: f64 = pred.data().iter().zip(target.data()).map(|(p, t)| p * t).sum();
    let psum: f64 = pred.data().iter().sum();
    let tsum: f64 = target.data().iter().sum();
    let num = 2.0 * inter + smooth;
    let den = psum + tsum + smooth;
    let grad = target
        .data()
        .iter()
        .map(|&t| -(2.0 * t * den - num) / (den * den))
        .collect();
    Ok(LossGrad {
        value: 1.0 - num / den,
        grad: Tensor::new(pred.shape().to_vec(), grad)?,
    })
}

pub fn loss_l1(pred: &Tensor, target: &Tensor) -> Result<LossGrad> {
    check(pred, target, "loss_l1")?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            value += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok(LossGrad {
        value: value / n,
        grad: Tensor::new(pred.shape().to_vec(), grad)?,
    })
}

pub fn loss_mse(pred: &Tensor, target: &Tensor) -> Result<LossGrad> {
    check(pred, target, "loss_mse")?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            value += d * d;
            2.0 * d / n
        })
        .collect();
    Ok(LossGrad {
        value: value / n,
        grad: Tensor::new(pred.shape().to_vec(), grad)?,
    })
}

/// `mean(real) − mean(fake)`, the critic's Wasserstein estimate.
pub fn wasserstein_gap(real_scores: &Tensor, fake_scores: &Tensor) -> Result<f64> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::InvalidArgument("wasserstein_gap: empty score vector".into()));
    }
    Ok(real_scores.mean() - fake_scores.mean())
}
