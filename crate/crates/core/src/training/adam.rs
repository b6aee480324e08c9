//! Bias-corrected Adam with coupled L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::config::OptimConfig;
use crate::params::{BlockKind, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl From<&OptimConfig> for AdamHyper {
    fn from(o: &OptimConfig) -> Self {
        AdamHyper {
            lr: o.lr,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            weight_decay: o.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// `true` for coordinates that receive weight decay: everything except
/// bias blocks.
pub fn decay_mask(layout: &Layout) -> Vec<bool> {
    let mut mask = vec![true; layout.len];
    for b in &layout.blocks {
        if b.kind == BlockKind::Bias {
            mask[b.range()].iter_mut().for_each(|m| *m = false);
        }
    }
    mask
}

/// One Adam update in place. `decay` selects the coordinates whose gradient
/// gets `weight_decay · θ` added before the moment updates.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grad: &[f64], hp: &AdamHyper, decay: &[bool]) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for i in 0..params.len() {
        let mut g = grad[i];
        if decay[i] {
            g += hp.weight_decay * params[i];
        }
        state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * g;
        state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
    }
}
