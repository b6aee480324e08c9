//! K parallel gated recurrences with per-state time/distance decay, and the
//! context-conditioned aggregation into one decision state.
//!
//! Forward functions return small caches holding exactly what the matching
//! `*_backward` function needs; backward functions accumulate parameter
//! gradients into a flat vector laid out like [`ParameterSet`].

use std::ops::Range;

use crate::config::{Aggregation, DynamicsConfig};
use crate::linalg::{add_assign, dot, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax, softplus};
use crate::params::ParameterSet;

/// `exp(-λ Δt/τ_t) · exp(-μ Δd/τ_d)`.
pub fn decay(lambda: f64, mu: f64, dt: f64, dd: f64, tau_t: f64, tau_d: f64) -> f64 {
    (-lambda * dt / tau_t).exp() * (-mu * dd / tau_d).exp()
}

/// Decay of sub-state `k` from its raw parameters.
pub fn decay_k(params: &ParameterSet, k: usize, dt: f64, dd: f64, dyn_cfg: &DynamicsConfig) -> f64 {
    let l = params.layout();
    let lambda = softplus(params.get(&l.raw_lambda)[k]);
    let mu = softplus(params.get(&l.raw_mu)[k]);
    decay(lambda, mu, dt, dd, dyn_cfg.tau_t, dyn_cfg.tau_d)
}

/// Gradient of [`decay_k`] w.r.t. `(raw_lambda_k, raw_mu_k)` given `γ`.
pub fn decay_k_backward(
    params: &ParameterSet,
    k: usize,
    gamma: f64,
    dt: f64,
    dd: f64,
    dyn_cfg: &DynamicsConfig,
) -> (f64, f64) {
    let l = params.layout();
    // d softplus(r)/dr = σ(r)
    let sl = sigmoid(params.get(&l.raw_lambda)[k]);
    let sm = sigmoid(params.get(&l.raw_mu)[k]);
    (-gamma * dt / dyn_cfg.tau_t * sl, -gamma * dd / dyn_cfg.tau_d * sm)
}

const Z: usize = 0;
const R: usize = 1;
const H: usize = 2;

/// Borrowed gate weights of one sub-state.
#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub w: [&'a [f64]; 3],
    pub u: [&'a [f64]; 3],
    pub b: [&'a [f64]; 3],
}

fn gate_range(base: &Range<usize>, k: usize, gate: usize, size: usize) -> Range<usize> {
    let start = base.start + (k * 3 + gate) * size;
    start..start + size
}

impl<'a> GruWeights<'a> {
    pub fn of(params: &'a ParameterSet, k: usize) -> Self {
        let l = params.layout();
        let ds = l.dims.d_s;
        let m = |base: &Range<usize>, g| params.get(&gate_range(base, k, g, ds * ds));
        let v = |g| params.get(&gate_range(&l.gru_b, k, g, ds));
        GruWeights {
            w: [m(&l.gru_w, Z), m(&l.gru_w, R), m(&l.gru_w, H)],
            u: [m(&l.gru_u, Z), m(&l.gru_u, R), m(&l.gru_u, H)],
            b: [v(Z), v(R), v(H)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCache {
    pub s_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub cand: Vec<f64>,
    pub gamma: f64,
}

/// `s = γ(1−z)⊙s_prev + z⊙s̃` with standard GRU gates.
pub fn state_update(w: &GruWeights, s_prev: &[f64], xh: &[f64], gamma: f64) -> (Vec<f64>, GruCache) {
    let n = s_prev.len();
    let gate = |g: usize, state: &[f64]| -> Vec<f64> {
        let mut a = w.b[g].to_vec();
        matvec_acc(w.w[g], xh, &mut a);
        matvec_acc(w.u[g], state, &mut a);
        a
    };
    let z: Vec<f64> = gate(Z, s_prev).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = gate(R, s_prev).into_iter().map(sigmoid).collect();
    let rs: Vec<f64> = r.iter().zip(s_prev).map(|(a, b)| a * b).collect();
    let cand: Vec<f64> = gate(H, &rs).into_iter().map(f64::tanh).collect();
    let s: Vec<f64> = (0..n)
        .map(|j| gamma * (1.0 - z[j]) * s_prev[j] + z[j] * cand[j])
        .collect();
    let cache = GruCache {
        s_prev: s_prev.to_vec(),
        z,
        r,
        cand,
        gamma,
    };
    (s, cache)
}

/// Per-gate ranges of one weight kind, ordered update, reset, candidate.
pub type GateRanges = [Range<usize>; 3];

/// Gradient slices of one sub-state's gate weights inside a flat gradient:
/// input weights, recurrent weights, biases.
pub fn gru_grad_ranges(params: &ParameterSet, k: usize) -> (GateRanges, GateRanges, GateRanges) {
    let l = params.layout();
    let ds = l.dims.d_s;
    let m = |base: &Range<usize>, g| gate_range(base, k, g, ds * ds);
    (
        [m(&l.gru_w, Z), m(&l.gru_w, R), m(&l.gru_w, H)],
        [m(&l.gru_u, Z), m(&l.gru_u, R), m(&l.gru_u, H)],
        [0, 1, 2].map(|g| gate_range(&l.gru_b, k, g, ds)),
    )
}

/// Backward of [`state_update`]. Accumulates weight gradients into `grad`
/// and `dxh`; returns `(ds_prev, dγ)`.
#[allow(clippy::too_many_arguments)]
pub fn state_update_backward(
    params: &ParameterSet,
    k: usize,
    cache: &GruCache,
    xh: &[f64],
    ds: &[f64],
    dxh: &mut [f64],
    grad: &mut [f64],
) -> (Vec<f64>, f64) {
    let w = GruWeights::of(params, k);
    let (gw, gu, gb) = gru_grad_ranges(params, k);
    let n = ds.len();
    let GruCache {
        s_prev,
        z,
        r,
        cand,
        gamma,
    } = cache;

    let mut dgamma = 0.0;
    let mut ds_prev = vec![0.0; n];
    let mut da_z = vec![0.0; n];
    let mut da_h = vec![0.0; n];
    for j in 0..n {
        dgamma += ds[j] * (1.0 - z[j]) * s_prev[j];
        ds_prev[j] = ds[j] * gamma * (1.0 - z[j]);
        let dz = ds[j] * (cand[j] - gamma * s_prev[j]);
        da_z[j] = dz * z[j] * (1.0 - z[j]);
        da_h[j] = ds[j] * z[j] * (1.0 - cand[j] * cand[j]);
    }
    let mut drs = vec![0.0; n];
    matvec_t_acc(w.u[H], &da_h, &mut drs);
    let da_r: Vec<f64> = (0..n).map(|j| drs[j] * s_prev[j] * r[j] * (1.0 - r[j])).collect();
    for j in 0..n {
        ds_prev[j] += drs[j] * r[j];
    }
    matvec_t_acc(w.u[Z], &da_z, &mut ds_prev);
    matvec_t_acc(w.u[R], &da_r, &mut ds_prev);

    let rs: Vec<f64> = r.iter().zip(s_prev).map(|(a, b)| a * b).collect();
    for (g, da, state) in [(Z, &da_z, &s_prev[..]), (R, &da_r, &s_prev[..]), (H, &da_h, &rs[..])] {
        matvec_t_acc(w.w[g], da, dxh);
        outer_acc(&mut grad[gw[g].clone()], da, xh);
        outer_acc(&mut grad[gu[g].clone()], da, state);
        add_assign(&mut grad[gb[g].clone()], da);
    }
    (ds_prev, dgamma)
}

/// The `K × d_s` matrix of current sub-states of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct SubStateBank {
    pub k: usize,
    pub d_s: usize,
    pub states: Vec<f64>,
    pub step: usize,
}

impl SubStateBank {
    pub fn zeros(k: usize, d_s: usize) -> Self {
        SubStateBank {
            k,
            d_s,
            states: vec![0.0; k * d_s],
            step: 0,
        }
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.states[k * self.d_s..(k + 1) * self.d_s]
    }

    pub fn is_finite(&self) -> bool {
        self.states.iter().all(|v| v.is_finite())
    }
}

/// Decays and updates every sub-state independently; returns the per-state
/// caches.
pub fn step_all(
    bank: &mut SubStateBank,
    params: &ParameterSet,
    xh: &[f64],
    dt: f64,
    dd: f64,
    dyn_cfg: &DynamicsConfig,
) -> Vec<GruCache> {
    let d_s = bank.d_s;
    let caches = (0..bank.k)
        .map(|k| {
            let gamma = decay_k(params, k, dt, dd, dyn_cfg);
            let (s, cache) = state_update(&GruWeights::of(params, k), bank.row(k), xh, gamma);
            bank.states[k * d_s..(k + 1) * d_s].copy_from_slice(&s);
            cache
        })
        .collect();
    bank.step += 1;
    caches
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggCache {
    /// Scorer hidden activations per sub-state; empty under uniform weights.
    pub hidden: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub alpha: Vec<f64>,
}

/// Relevance `g(s, c) = w2 · tanh(A1 [s; c] + b1)` and its hidden layer.
pub fn relevance(params: &ParameterSet, s: &[f64], c: &[f64]) -> (f64, Vec<f64>) {
    let l = params.layout();
    let mut sc = Vec::with_capacity(s.len() + c.len());
    sc.extend_from_slice(s);
    sc.extend_from_slice(c);
    let mut hid = params.get(&l.agg_b1).to_vec();
    matvec_acc(params.get(&l.agg_w1), &sc, &mut hid);
    hid.iter_mut().for_each(|v| *v = v.tanh());
    (dot(params.get(&l.agg_w2), &hid), hid)
}

/// `α = softmax(g(s_k, c)/τ)` and `h_dec = concat(α_k s_k)`.
pub fn aggregate(
    bank: &SubStateBank,
    c: &[f64],
    params: &ParameterSet,
    mode: Aggregation,
    temperature: f64,
) -> (Vec<f64>, AggCache) {
    let cache = match mode {
        Aggregation::Uniform => AggCache {
            hidden: Vec::new(),
            scores: Vec::new(),
            alpha: vec![1.0 / bank.k as f64; bank.k],
        },
        Aggregation::Learned => {
            let (scores, hidden): (Vec<f64>, Vec<Vec<f64>>) =
                (0..bank.k).map(|k| relevance(params, bank.row(k), c)).unzip();
            let scaled: Vec<f64> = scores.iter().map(|s| s / temperature).collect();
            AggCache {
                alpha: softmax(&scaled),
                hidden,
                scores,
            }
        }
    };
    let mut h = Vec::with_capacity(bank.states.len());
    for k in 0..bank.k {
        h.extend(bank.row(k).iter().map(|v| cache.alpha[k] * v));
    }
    (h, cache)
}

/// Backward of [`aggregate`]: adds into `ds` (bank-shaped) and `dc`.
#[allow(clippy::too_many_arguments)]
pub fn aggregate_backward(
    bank: &SubStateBank,
    c: &[f64],
    params: &ParameterSet,
    cache: &AggCache,
    temperature: f64,
    dh: &[f64],
    ds: &mut [f64],
    dc: &mut [f64],
    grad: &mut [f64],
) {
    let d_s = bank.d_s;
    let kk = bank.k;
    let mut dalpha = vec![0.0; kk];
    for (k, da) in dalpha.iter_mut().enumerate() {
        let blk = k * d_s..(k + 1) * d_s;
        *da = dot(&dh[blk.clone()], bank.row(k));
        for (d, g) in ds[blk.clone()].iter_mut().zip(&dh[blk]) {
            *d += cache.alpha[k] * g;
        }
    }
    if cache.hidden.is_empty() {
        return;
    }
    let l = params.layout();
    let mean: f64 = cache.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
    let w1 = params.get(&l.agg_w1);
    let w2 = params.get(&l.agg_w2);
    for k in 0..kk {
        let dscore = cache.alpha[k] * (dalpha[k] - mean) / temperature;
        if dscore == 0.0 {
            continue;
        }
        let hid = &cache.hidden[k];
        for (g, h) in grad[l.agg_w2.clone()].iter_mut().zip(hid) {
            *g += dscore * h;
        }
        let da: Vec<f64> = hid.iter().zip(w2).map(|(h, w)| dscore * w * (1.0 - h * h)).collect();
        let mut sc = Vec::with_capacity(d_s + c.len());
        sc.extend_from_slice(bank.row(k));
        sc.extend_from_slice(c);
        outer_acc(&mut grad[l.agg_w1.clone()], &da, &sc);
        add_assign(&mut grad[l.agg_b1.clone()], &da);
        let mut dsc = vec![0.0; sc.len()];
        matvec_t_acc(w1, &da, &mut dsc);
        add_assign(&mut ds[k * d_s..(k + 1) * d_s], &dsc[..d_s]);
        add_assign(dc, &dsc[d_s..]);
    }
}
