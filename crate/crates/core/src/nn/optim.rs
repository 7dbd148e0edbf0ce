use super::params::{ParamGrads, ParamStore};
use super::tensor::Float;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam step. `decay` is an L2 term folded into the
/// gradient of every trainable entry (weights and biases alike). Trainable
/// entries without a gradient are treated as having a zero gradient.
pub fn adam_step<T: Float>(
    store: &mut ParamStore<T>,
    grads: &ParamGrads<T>,
    lr: f64,
    decay: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.grads.len() != store.len() {
        return Err(Error::shape(format!(
            "{} gradients for {} parameters",
            grads.grads.len(),
            store.len()
        )));
    }
    for (e, g) in store.entries().iter().zip(&grads.grads) {
        if let Some(g) = g {
            if g.len() != e.value.numel() {
                return Err(Error::shape(format!(
                    "gradient of `{}` has {} values, parameter has {}",
                    e.name,
                    g.len(),
                    e.value.numel()
                )));
            }
        }
    }
    store.step += 1;
    let t = store.step as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let (lr, decay, eps) = (T::of(lr), T::of(decay), T::of(cfg.eps));
    for (e, g) in store.entries_mut().iter_mut().zip(&grads.grads) {
        if !e.role.trainable() {
            continue;
        }
        for i in 0..e.value.data.len() {
            let theta = e.value.data[i];
            let gi = g.as_ref().map_or(T::zero(), |g| g[i]) + decay * theta;
            e.m[i] = b1 * e.m[i] + (T::one() - b1) * gi;
            e.v[i] = b2 * e.v[i] + (T::one() - b2) * gi * gi;
            let m_hat = e.m[i] / c1;
            let v_hat = e.v[i] / c2;
            e.value.data[i] = theta - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
