use super::network::{Gradients, Network};
use crate::error::{Error, Result};

/// Adaptive-moment state, one accumulator pair per parameter, laid out as
/// [w0, b0, w1, b1, ...] to match the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Network, lr: f64) -> AdamState {
        let mut m = Vec::with_capacity(net.layers.len() * 2);
        for layer in &net.layers {
            m.push(vec![0.0; layer.w.data.len()]);
            m.push(vec![0.0; layer.b.len()]);
        }
        AdamState { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, v: m.clone(), m }
    }
}

/// One bias-corrected update in place. Deterministic given the state;
/// errors out on any non-finite gradient so training aborts loudly instead
/// of silently poisoning the parameters.
pub fn adam_step(state: &mut AdamState, net: &mut Network, grads: &Gradients) -> Result<()> {
    if grads.layers.len() != net.layers.len() || state.m.len() != 2 * net.layers.len() {
        return Err(Error::InvalidArgument("optimizer state shaped for a different network".into()));
    }
    for (l, (dw, db)) in grads.layers.iter().enumerate() {
        if dw.data.iter().chain(db).any(|g| !g.is_finite()) {
            return Err(Error::NoConvergence(format!(
                "non-finite gradient in layer {l} at step {}",
                state.t + 1
            )));
        }
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let (dw, db) = &grads.layers[l];
        let groups = [
            (&mut layer.w.data, &dw.data, 2 * l),
            (&mut layer.b, db, 2 * l + 1),
        ];
        for (params, grad, slot) in groups {
            if params.len() != grad.len() {
                return Err(Error::InvalidArgument(format!(
                    "gradient shape mismatch in layer {l}"
                )));
            }
            let (ms, vs) = (&mut state.m[slot], &mut state.v[slot]);
            for k in 0..params.len() {
                ms[k] = state.beta1 * ms[k] + (1.0 - state.beta1) * grad[k];
                vs[k] = state.beta2 * vs[k] + (1.0 - state.beta2) * grad[k] * grad[k];
                let mhat = ms[k] / bc1;
                let vhat = vs[k] / bc2;
                params[k] -= state.lr * mhat / (vhat.sqrt() + state.eps);
            }
        }
    }
    Ok(())
}
