//! Central finite-difference checks of analytic gradients (64-bit only).

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-4;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Worst relative error between `analytic` and central differences of `value_at`.
pub fn max_relative_error(
    analytic: &[Tensor<f64>],
    inputs: &[Tensor<f64>],
    eps: f64,
    mut value_at: impl FnMut(&[Tensor<f64>]) -> Result<f64>,
) -> Result<f64> {
    if analytic.len() != inputs.len() {
        return Err(Error::Input(format!(
            "{} analytic gradients for {} inputs",
            analytic.len(),
            inputs.len()
        )));
    }
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    let mut worst: f64 = 0.0;
    for (i, grad) in analytic.iter().enumerate() {
        if grad.shape() != inputs[i].shape() {
            return Err(Error::shape("grad_check", grad.shape(), inputs[i].shape()));
        }
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            probe[i].data_mut()[j] = x0 + eps;
            let up = value_at(&probe)?;
            probe[i].data_mut()[j] = x0 - eps;
            let down = value_at(&probe)?;
            probe[i].data_mut()[j] = x0;
            if !up.is_finite() || !down.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite value while perturbing input {i} coordinate {j}"
                )));
            }
            let numeric = (up - down) / (2.0 * eps);
            let a = grad.data()[j];
            if !a.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite analytic gradient at input {i} coordinate {j}"
                )));
            }
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Checks a scalar function built on a [`Graph`] from leaf inputs.
pub fn grad_check<Fun>(f: Fun, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    Fun: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|x| g.input(x.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok((g, vars, out))
    };
    let (graph, vars, out) = eval(inputs)?;
    if !graph.value(out).all_finite() {
        return Err(Error::Numeric("non-finite output".into()));
    }
    let grads = graph.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(x.shape()))
        })
        .collect();
    max_relative_error(&analytic, inputs, eps, |xs| {
        let (g, _, o) = eval(xs)?;
        Ok(g.scalar(o))
    })
}
