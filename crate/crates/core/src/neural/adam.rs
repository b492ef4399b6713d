//! Adam with bias correction, one state per network.

use super::mlp::{Mlp, Params};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Params,
    pub second: Params,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(sizes: &[usize], lr: f64) -> Self {
        Self {
            first: Params::zeros(sizes),
            second: Params::zeros(sizes),
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn for_network(net: &Mlp, lr: f64) -> Self {
        Self::new(&net.sizes(), lr)
    }
}

/// One descent step `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
/// For gradient ascent pass the negated gradient.
pub fn adam_step(net: &mut Mlp, grads: &Params, state: &mut AdamState) -> Result<()> {
    if grads.sizes() != net.sizes() || state.first.sizes() != net.sizes() {
        return Err(Error::Shape("Adam state, gradient and network shapes differ".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    let params = net.params_mut();
    for (((p, &g), m), v) in params.iter_mut().zip(grads.iter()).zip(state.first.iter_mut()).zip(state.second.iter_mut()) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}
