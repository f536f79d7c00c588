//! Adaptive-moment optimizer over the flattened parameter set.

use serde::{Deserialize, Serialize};

use super::{NetError, NetParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, flattened in tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub step_count: u64,
}

impl Moments {
    pub fn zeros(params: &NetParams) -> Self {
        let n = params.parameter_count();
        Moments {
            first: vec![0.0; n],
            second: vec![0.0; n],
            step_count: 0,
        }
    }
}

/// One bias-corrected update in place. Rejects non-finite gradients before
/// touching anything.
pub fn optimizer_step(
    params: &mut NetParams,
    grads: &NetParams,
    moments: &mut Moments,
    config: &AdamConfig,
) -> Result<(), NetError> {
    let n = params.parameter_count();
    if grads.parameter_count() != n || moments.first.len() != n || moments.second.len() != n {
        return Err(NetError::Shape("optimizer state does not match parameters".into()));
    }
    if !grads.is_finite() {
        return Err(NetError::NonFinite("gradient"));
    }
    moments.step_count += 1;
    let t = moments.step_count as i32;
    let c1 = 1.0 - config.beta1.powi(t);
    let c2 = 1.0 - config.beta2.powi(t);
    let mut at = 0;
    let grad_tensors = grads.tensors();
    for ((_, data), g) in params.tensors_mut().into_iter().zip(&grad_tensors) {
        for (p, &gi) in data.iter_mut().zip(g.data) {
            let m = &mut moments.first[at];
            let v = &mut moments.second[at];
            *m = config.beta1 * *m + (1.0 - config.beta1) * gi;
            *v = config.beta2 * *v + (1.0 - config.beta2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
            at += 1;
        }
    }
    if !params.is_finite() {
        return Err(NetError::NonFinite("parameters"));
    }
    Ok(())
}
