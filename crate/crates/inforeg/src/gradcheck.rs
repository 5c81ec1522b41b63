//! Finite-difference gradient checking utilities.
//!
//! The numerical side evaluates the forward-only task loss under central
//! perturbation of each parameter, so it stays independent of the analytic
//! backward path it is used to check.

use crate::model::{self, LossWeights, ModelParams};
use crate::numerics::Tensor;
use crate::Result;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Central-difference gradient of the task loss w.r.t. every parameter, in
/// the flat order of [`ModelParams::param_get`].
pub fn numerical_gradient(
    params: &mut ModelParams,
    batch: &[Tensor],
    labels: &[usize],
    weights: &LossWeights,
    step: f64,
) -> Result<Vec<f64>> {
    let n = params.param_count();
    let mut grad = vec![0.0; n];
    for (i, g) in grad.iter_mut().enumerate() {
        let orig = params.param_get(i);
        params.param_set(i, orig + step);
        let up = model::task_loss(params, batch, labels, weights)?;
        params.param_set(i, orig - step);
        let down = model::task_loss(params, batch, labels, weights)?;
        params.param_set(i, orig);
        *g = (up - down) / (2.0 * step);
    }
    Ok(grad)
}

/// Elementwise relative error with a small absolute floor.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Check the analytic gradient of every parameter against central finite
/// differences; returns the worst relative error and its parameter index.
pub fn check_model_gradients(
    params: &mut ModelParams,
    batch: &[Tensor],
    labels: &[usize],
    weights: &LossWeights,
    step: f64,
) -> Result<(f64, usize)> {
    let (_, trace) = model::forward(params, batch)?;
    let (_, grads) = model::backward(params, &trace, labels, weights)?;
    let analytic = grads.flatten_all();
    let numeric = numerical_gradient(params, batch, labels, weights, step)?;
    let mut worst = (0.0, 0usize);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let err = relative_error(*a, *n);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    Ok(worst)
}
