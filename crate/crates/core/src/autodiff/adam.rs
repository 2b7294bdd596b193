use serde::{Deserialize, Serialize};

use super::param::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self, params: &mut ParamSet) {
        adam_step(params, self.lr, self.beta1, self.beta2, self.eps);
    }
}

/// One bias-corrected Adam update of every parameter from its `grad`; grads
/// are zeroed afterwards.
pub fn adam_step(params: &mut ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    for p in params.iter_mut() {
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..p.value.len() {
            let g = p.grad[i];
            p.adam_m[i] = beta1 * p.adam_m[i] + (1.0 - beta1) * g;
            p.adam_v[i] = beta2 * p.adam_v[i] + (1.0 - beta2) * g * g;
            let m_hat = p.adam_m[i] / c1;
            let v_hat = p.adam_v[i] / c2;
            p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            p.grad[i] = 0.0;
        }
    }
}

/// Plain gradient descent step; grads are zeroed afterwards.
pub fn sgd_step(params: &mut ParamSet, lr: f64) {
    for p in params.iter_mut() {
        for (v, g) in p.value.iter_mut().zip(p.grad.iter_mut()) {
            *v -= lr * *g;
            *g = 0.0;
        }
    }
}
