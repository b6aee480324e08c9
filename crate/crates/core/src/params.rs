//! Learnable parameters as one flat `f64` vector with a named block table.
//!
//! Every named view is a slice of the flat vector, so writes through either
//! view are seen by the other. Gradients and optimizer moments use the same
//! layout.

use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Transitions};
use crate::linalg::softplus_inv;

/// Shape constants of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_pois: usize,
    pub d_e: usize,
    pub k: usize,
    pub d_s: usize,
    pub d_slot: usize,
    pub n_slot: usize,
    pub d_dist: usize,
    pub n_bucket: usize,
    pub d_spatial: usize,
}

impl Dims {
    pub fn new(cfg: &RunConfig, n_pois: usize) -> Self {
        let m = &cfg.model;
        Dims {
            n_pois,
            d_e: m.d_e,
            k: m.k,
            d_s: m.d_s,
            d_slot: m.d_slot,
            n_slot: m.n_slot,
            d_dist: m.d_dist,
            n_bucket: m.bucket_edges.len(),
            d_spatial: m.d_spatial,
        }
    }

    /// Temporal encoding: four sinusoids plus the slot embedding.
    pub fn d_time(&self) -> usize {
        4 + self.d_slot
    }

    /// Pre-image of the spatial mixing matrix: log-distance, bucket
    /// embedding, Δlat, Δlon.
    pub fn d_spatial_in(&self) -> usize {
        3 + self.d_dist
    }

    pub fn d_x(&self) -> usize {
        self.d_e + self.d_time() + self.d_spatial
    }

    pub fn d_context(&self) -> usize {
        self.d_time() + self.d_spatial
    }

    /// Decision-state width `K · d_s`.
    pub fn d_state(&self) -> usize {
        self.k * self.d_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Embedding,
    Weight,
    Bias,
    Decay,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
    pub kind: BlockKind,
}

impl Block {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Block table plus direct ranges for the hot paths.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub dims: Dims,
    pub shared_transitions: bool,
    pub blocks: Vec<Block>,
    pub poi_emb: Range<usize>,
    pub poi_bias: Range<usize>,
    pub slot_emb: Range<usize>,
    pub dist_emb: Range<usize>,
    pub spatial_w: Range<usize>,
    pub first_spatial: Range<usize>,
    pub in_w: Range<usize>,
    pub in_b: Range<usize>,
    /// `K × 3 × d_s × d_s`, gates ordered update, reset, candidate.
    pub gru_w: Range<usize>,
    pub gru_u: Range<usize>,
    /// `K × 3 × d_s`.
    pub gru_b: Range<usize>,
    pub raw_lambda: Range<usize>,
    pub raw_mu: Range<usize>,
    pub agg_w1: Range<usize>,
    pub agg_b1: Range<usize>,
    pub agg_w2: Range<usize>,
    pub out_w: Range<usize>,
    pub out_b: Range<usize>,
    pub len: usize,
}

/// Names of the per-sub-state transition blocks; under shared transitions
/// their K copies are tied.
pub const TRANSITION_BLOCKS: [&str; 5] = ["gru.w", "gru.u", "gru.b", "decay.raw_lambda", "decay.raw_mu"];

impl Layout {
    pub fn new(dims: Dims, transitions: Transitions) -> Self {
        let mut blocks = Vec::new();
        let mut offset = 0;
        let mut add = |name: &str, shape: Vec<usize>, kind: BlockKind| -> Range<usize> {
            let len: usize = shape.iter().product();
            blocks.push(Block {
                name: name.to_string(),
                shape,
                offset,
                len,
                kind,
            });
            offset += len;
            offset - len..offset
        };
        let d = dims;
        let poi_emb = add("poi.embedding", vec![d.n_pois, d.d_e], BlockKind::Embedding);
        let poi_bias = add("poi.bias", vec![d.n_pois], BlockKind::Bias);
        let slot_emb = add("time.slot_embedding", vec![d.n_slot, d.d_slot], BlockKind::Embedding);
        let dist_emb = add(
            "space.bucket_embedding",
            vec![d.n_bucket, d.d_dist],
            BlockKind::Embedding,
        );
        let spatial_w = add("space.mix", vec![d.d_spatial, d.d_spatial_in()], BlockKind::Weight);
        let first_spatial = add("space.first_step", vec![d.d_spatial], BlockKind::Embedding);
        let in_w = add("proj.input.w", vec![d.d_s, d.d_x()], BlockKind::Weight);
        let in_b = add("proj.input.b", vec![d.d_s], BlockKind::Bias);
        let gru_w = add("gru.w", vec![d.k, 3, d.d_s, d.d_s], BlockKind::Weight);
        let gru_u = add("gru.u", vec![d.k, 3, d.d_s, d.d_s], BlockKind::Weight);
        let gru_b = add("gru.b", vec![d.k, 3, d.d_s], BlockKind::Bias);
        let raw_lambda = add("decay.raw_lambda", vec![d.k], BlockKind::Decay);
        let raw_mu = add("decay.raw_mu", vec![d.k], BlockKind::Decay);
        let agg_w1 = add("agg.w1", vec![d.d_s, d.d_s + d.d_context()], BlockKind::Weight);
        let agg_b1 = add("agg.b1", vec![d.d_s], BlockKind::Bias);
        let agg_w2 = add("agg.w2", vec![d.d_s], BlockKind::Weight);
        let out_w = add("proj.decision.w", vec![d.d_e, d.d_state()], BlockKind::Weight);
        let out_b = add("proj.decision.b", vec![d.d_e], BlockKind::Bias);
        Layout {
            dims,
            shared_transitions: transitions == Transitions::Shared,
            blocks,
            poi_emb,
            poi_bias,
            slot_emb,
            dist_emb,
            spatial_w,
            first_spatial,
            in_w,
            in_b,
            gru_w,
            gru_u,
            gru_b,
            raw_lambda,
            raw_mu,
            agg_w1,
            agg_b1,
            agg_w2,
            out_w,
            out_b,
            len: offset,
        }
    }

    pub fn from_config(cfg: &RunConfig, n_pois: usize) -> Self {
        Layout::new(Dims::new(cfg, n_pois), cfg.model.transitions)
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Block containing flat coordinate `idx`.
    pub fn block_of(&self, idx: usize) -> &Block {
        self.blocks
            .iter()
            .find(|b| b.range().contains(&idx))
            .expect("index within layout")
    }

    /// For a coordinate inside a tied transition block, the flat indices of
    /// all its copies (including itself); otherwise just `[idx]`.
    pub fn tied_group(&self, idx: usize) -> Vec<usize> {
        if !self.shared_transitions {
            return vec![idx];
        }
        let b = self.block_of(idx);
        if !TRANSITION_BLOCKS.contains(&b.name.as_str()) {
            return vec![idx];
        }
        let per = b.len / self.dims.k;
        let local = (idx - b.offset) % per;
        (0..self.dims.k).map(|k| b.offset + k * per + local).collect()
    }

    /// Replaces each tied copy's gradient with the sum over copies.
    pub fn tie_gradient(&self, grad: &mut [f64]) {
        if !self.shared_transitions || self.dims.k == 1 {
            return;
        }
        for name in TRANSITION_BLOCKS {
            let b = self.block(name).expect("transition block");
            let per = b.len / self.dims.k;
            for j in 0..per {
                let total: f64 = (0..self.dims.k).map(|k| grad[b.offset + k * per + j]).sum();
                for k in 0..self.dims.k {
                    grad[b.offset + k * per + j] = total;
                }
            }
        }
    }

    /// Closed-form parameter count.
    pub fn expected_len(dims: &Dims) -> usize {
        let d = dims;
        d.n_pois * (d.d_e + 1)
            + d.n_slot * d.d_slot
            + d.n_bucket * d.d_dist
            + d.d_spatial * d.d_spatial_in()
            + d.d_spatial
            + d.d_s * (d.d_x() + 1)
            + d.k * (6 * d.d_s * d.d_s + 3 * d.d_s + 2)
            + d.d_s * (d.d_s + d.d_context() + 2)
            + d.d_e * (d.d_state() + 1)
    }
}

/// The flat parameter vector Θ together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    layout: Arc<Layout>,
    values: Vec<f64>,
}

impl ParameterSet {
    pub fn zeros(layout: Arc<Layout>) -> Self {
        let values = vec![0.0; layout.len];
        ParameterSet { layout, values }
    }

    pub fn from_flat(layout: Arc<Layout>, values: Vec<f64>) -> Option<Self> {
        (values.len() == layout.len).then_some(ParameterSet { layout, values })
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: &Range<usize>) -> &[f64] {
        &self.values[r.clone()]
    }

    pub fn named(&self, name: &str) -> Option<&[f64]> {
        let b = self.layout.block(name)?;
        Some(&self.values[b.range()])
    }

    pub fn named_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.layout.block(name)?.range();
        Some(&mut self.values[r])
    }

    /// Effective temporal decay rates `softplus(raw_lambda)`.
    pub fn lambdas(&self) -> Vec<f64> {
        self.get(&self.layout.raw_lambda)
            .iter()
            .map(|&r| crate::linalg::softplus(r))
            .collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.get(&self.layout.raw_mu)
            .iter()
            .map(|&r| crate::linalg::softplus(r))
            .collect()
    }
}

/// Embeddings ~ N(0, 0.02²); weights ~ U(±1/√fan_in); biases 0; decay raws
/// set so that `softplus(raw_k) = decay_init + k · decay_stagger`.
pub fn init_params(cfg: &RunConfig, n_pois: usize, seed: u64) -> ParameterSet {
    let layout = Arc::new(Layout::from_config(cfg, n_pois));
    let mut p = ParameterSet::zeros(layout.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.02).expect("valid normal");
    for b in &layout.blocks {
        let slice = &mut p.values[b.range()];
        match b.kind {
            BlockKind::Embedding => slice.iter_mut().for_each(|v| *v = normal.sample(&mut rng)),
            BlockKind::Weight => {
                let fan_in = *b.shape.last().expect("non-empty shape");
                let bound = 1.0 / (fan_in as f64).sqrt();
                slice.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
            }
            BlockKind::Bias => {}
            BlockKind::Decay => {
                for (k, v) in slice.iter_mut().enumerate() {
                    let target = cfg.dynamics.decay_init + cfg.dynamics.decay_stagger * k as f64;
                    *v = softplus_inv(target);
                }
            }
        }
    }
    if layout.shared_transitions {
        for name in TRANSITION_BLOCKS {
            let b = layout.block(name).expect("transition block");
            let per = b.len / layout.dims.k;
            let first: Vec<f64> = p.values[b.offset..b.offset + per].to_vec();
            for k in 1..layout.dims.k {
                p.values[b.offset + k * per..b.offset + (k + 1) * per].copy_from_slice(&first);
            }
        }
    }
    p
}
