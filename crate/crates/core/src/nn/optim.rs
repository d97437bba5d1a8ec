use serde::{Deserialize, Serialize};

use super::tensor::Param;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimKind {
    /// `acc ← ρ·acc + (1−ρ)·g²`, `θ ← θ − lr·g/√(acc+ε)`.
    Rmsprop { rho: f64, eps: f64 },
    /// Bias-corrected Adam.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimKind {
    pub fn rmsprop() -> Self {
        OptimKind::Rmsprop { rho: 0.9, eps: 1e-8 }
    }

    pub fn adam() -> Self {
        OptimKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state for an ordered list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    kind: OptimKind,
    learning_rate: f64,
    step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(kind: OptimKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {learning_rate} must be finite and >= 0"
            )));
        }
        Ok(Self {
            kind,
            learning_rate,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// Applies one update from each parameter's accumulated gradient.
    ///
    /// Fails without touching any parameter when a gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        let step = self.step + 1;
        if let Some(bad) = params.iter().position(|p| !p.grad.is_finite()) {
            return Err(Error::Divergence {
                step,
                reason: format!("non-finite gradient in parameter tensor {bad}"),
            });
        }
        if self.second.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        if self.second.len() != params.len() || params.iter().zip(&self.second).any(|(p, s)| p.value.len() != s.len()) {
            return Err(Error::InvalidArgument(
                "optimizer state does not match parameter list".into(),
            ));
        }
        self.step = step;
        let lr = self.learning_rate;
        match self.kind {
            OptimKind::Rmsprop { rho, eps } => {
                for (p, acc) in params.iter_mut().zip(&mut self.second) {
                    let Param { value, grad } = &mut **p;
                    for ((v, &g), a) in value.data_mut().iter_mut().zip(grad.data()).zip(acc.iter_mut()) {
                        *a = rho * *a + (1.0 - rho) * g * g;
                        *v -= lr * g / (*a + eps).sqrt();
                    }
                }
            }
            OptimKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(step as i32);
                let c2 = 1.0 - beta2.powi(step as i32);
                for ((p, m), s) in params.iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    let Param { value, grad } = &mut **p;
                    for (((v, &g), mi), si) in value
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(m.iter_mut())
                        .zip(s.iter_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *si = beta2 * *si + (1.0 - beta2) * g * g;
                        *v -= lr * (*mi / c1) / ((*si / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
