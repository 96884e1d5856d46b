use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment estimates for every parameter, in slot order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<F> {
    pub config: AdamWConfig,
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub step: u64,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(params: &ModelParams<F>, config: AdamWConfig) -> Self {
        OptimizerState {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One decoupled-weight-decay Adam update:
/// `θ ← θ − lr·m̂/(√v̂ + eps) − lr·wd·θ`.
pub fn adamw_step<F: Real>(
    params: &mut ModelParams<F>,
    grads: &[Tensor<F>],
    state: &mut OptimizerState<F>,
    lr: f64,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Input(format!(
            "optimizer expected {} gradients, got {}",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if p.value.shape() != g.shape() {
            return Err(Error::shape("adamw_step", p.value.shape(), g.shape()));
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter `{}`",
                p.id
            )));
        }
    }
    state.step += 1;
    let c = state.config;
    let (b1, b2) = (F::of(c.beta1), F::of(c.beta2));
    let bc1 = F::of(1.0 - c.beta1.powi(state.step as i32));
    let bc2 = F::of(1.0 - c.beta2.powi(state.step as i32));
    let (lr, eps) = (F::of(lr), F::of(c.eps));
    let decay = F::one() - lr * F::of(c.weight_decay);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let moments = m.data_mut().iter_mut().zip(v.data_mut());
        for ((theta, &gi), (mi, vi)) in p.value.data_mut().iter_mut().zip(g.data()).zip(moments) {
            *mi = b1 * *mi + (F::one() - b1) * gi;
            *vi = b2 * *vi + (F::one() - b2) * gi * gi;
            let update = lr * (*mi / bc1) / ((*vi / bc2).sqrt() + eps);
            *theta = *theta * decay - update;
        }
    }
    Ok(())
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<F: Real>(grads: &mut [Tensor<F>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .map(|g| g.sum_squares().to_f64().unwrap_or(f64::INFINITY))
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = F::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }
    norm
}
