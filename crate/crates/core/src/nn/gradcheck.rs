//! Finite-difference verification of analytic parameter gradients.

use super::loss::LossGrad;
use super::net::Model;
use super::tensor::{Param, Tensor};
use crate::error::Result;
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Number of randomly chosen parameter coordinates (all if fewer exist).
    pub coordinates: usize,
    /// Denominator floor for the relative error.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            coordinates: 32,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates_checked: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Parameter gradients of `loss(model(input))` by backpropagation.
pub fn analytic_gradients<M, L>(model: &mut M, input: &Tensor, loss: &L) -> Result<Vec<Tensor>>
where
    M: Model,
    L: Fn(&Tensor) -> Result<LossGrad>,
{
    model.zero_grad();
    let out = model.forward(input)?;
    let lg = loss(&out)?;
    model.backward(&lg.grad)?;
    Ok(model.params().iter().map(|p| p.grad.clone()).collect())
}

fn param_slot<'a>(params: &'a mut [&mut Param], mut flat: usize) -> &'a mut f64 {
    for p in params.iter_mut() {
        let n = p.value.len();
        if flat < n {
            return &mut p.value.data_mut()[flat];
        }
        flat -= n;
    }
    unreachable!("flat index out of range")
}

/// Compares supplied gradients against central differences.
pub fn compare_gradients<M, L>(
    model: &mut M,
    input: &Tensor,
    loss: &L,
    analytic: &[Tensor],
    opts: GradCheckOptions,
    rng: &mut SeededRng,
) -> Result<GradCheckReport>
where
    M: Model,
    L: Fn(&Tensor) -> Result<LossGrad>,
{
    let flat: Vec<f64> = analytic.iter().flat_map(|t| t.data().iter().copied()).collect();
    let total = flat.len();
    let mut coords: Vec<usize> = (0..total).collect();
    if opts.coordinates < total {
        rng.shuffle(&mut coords);
        coords.truncate(opts.coordinates);
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates_checked: coords.len(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for &c in &coords {
        let original = *param_slot(&mut model.params_mut(), c);
        *param_slot(&mut model.params_mut(), c) = original + opts.step;
        let plus = loss(&model.infer(input)?)?.value;
        *param_slot(&mut model.params_mut(), c) = original - opts.step;
        let minus = loss(&model.infer(input)?)?.value;
        *param_slot(&mut model.params_mut(), c) = original;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let err = relative_error(flat[c], numeric, opts.floor);
        if err > report.max_relative_error || report.coordinates_checked == 1 {
            report.max_relative_error = err;
            report.worst_analytic = flat[c];
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}

/// Maximum relative error between backpropagated and central-difference
/// parameter gradients over a random coordinate subset.
pub fn grad_check<M, L>(
    model: &mut M,
    input: &Tensor,
    loss: L,
    opts: GradCheckOptions,
    rng: &mut SeededRng,
) -> Result<GradCheckReport>
where
    M: Model,
    L: Fn(&Tensor) -> Result<LossGrad>,
{
    let analytic = analytic_gradients(model, input, &loss)?;
    compare_gradients(model, input, &loss, &analytic, opts, rng)
}

/// Relative error of the input gradient at a few random coordinates.
pub fn input_grad_check<M, L>(
    model: &mut M,
    input: &Tensor,
    loss: L,
    opts: GradCheckOptions,
    rng: &mut SeededRng,
) -> Result<f64>
where
    M: Model,
    L: Fn(&Tensor) -> Result<LossGrad>,
{
    model.zero_grad();
    let out = model.forward(input)?;
    let lg = loss(&out)?;
    let dx = model.backward(&lg.grad)?;
    let mut worst: f64 = 0.0;
    for _ in 0..opts.coordinates.min(input.len()) {
        let i = rng.below(input.len() as u64) as usize;
        let mut x = input.clone();
        x.data_mut()[i] += opts.step;
        let plus = loss(&model.infer(&x)?)?.value;
        x.data_mut()[i] -= 2.0 * opts.step;
        let minus = loss(&model.infer(&x)?)?.value;
        let numeric = (plus - minus) / (2.0 * opts.step);
        worst = worst.max(relative_error(dx.data()[i], numeric, opts.floor));
    }
    Ok(worst)
}
