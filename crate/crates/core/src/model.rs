//! The recommender end to end over one trajectory: encode, project, decay
//! and update every sub-state, aggregate, project, score a slate, and the
//! reverse pass through the unrolled recurrence.
//!
//! Randomness (negative slates and dropout masks) is drawn up front into a
//! [`Plan`], so a forward pass is a pure function of parameters, sequence
//! and plan. Gradient checking relies on this.

use rand::Rng;

use crate::config::RunConfig;
use crate::dynamics::{
    aggregate, aggregate_backward, decay_k_backward, state_update_backward, step_all, AggCache, GruCache, SubStateBank,
};
use crate::encoding::{build_input, build_input_backward, project_decision, project_input, EncodedStep};
use crate::error::Result;
use crate::ingest::Sequence;
use crate::linalg::{add_assign, dot, matvec_t_acc, outer_acc};
use crate::objective::{sample_negatives, score_all, slate_loss, LossTerms};
use crate::params::ParameterSet;

/// Pre-drawn randomness for one training pass over one sequence. Step `i`
/// predicts step `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub negatives: Vec<Vec<usize>>,
    /// Inverted-dropout masks for `x̂`, empty when dropout is off.
    pub x_masks: Vec<Vec<f64>>,
    pub h_masks: Vec<Vec<f64>>,
}

fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, n: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub fn sample_plan<R: Rng + ?Sized>(
    rng: &mut R,
    seq: &Sequence,
    params: &ParameterSet,
    cfg: &RunConfig,
) -> Result<Plan> {
    let dims = params.layout().dims;
    let n = seq.n_targets();
    let rate = cfg.optim.dropout;
    let mut plan = Plan {
        negatives: Vec::with_capacity(n),
        x_masks: Vec::new(),
        h_masks: Vec::new(),
    };
    for i in 0..n {
        let pos = seq.steps[i + 1].poi;
        plan.negatives
            .push(sample_negatives(rng, dims.n_pois, pos, cfg.objective.n_neg)?);
        if rate > 0.0 {
            plan.x_masks.push(dropout_mask(rng, dims.d_s, rate));
            plan.h_masks.push(dropout_mask(rng, dims.d_state(), rate));
        }
    }
    Ok(plan)
}

/// Everything the reverse pass needs from one forward step.
#[derive(Debug, Clone)]
struct StepTape {
    poi: usize,
    enc: EncodedStep,
    xh: Vec<f64>,
    x_mask: Option<Vec<f64>>,
    dt: f64,
    dd: f64,
    gru: Vec<GruCache>,
    bank: SubStateBank,
    agg: AggCache,
    h_dec: Vec<f64>,
    h_mask: Option<Vec<f64>>,
    h_proj: Vec<f64>,
    /// Slate indices (0 = positive) and the loss gradient w.r.t. its logits.
    slate: Vec<usize>,
    dlogits: Vec<f64>,
}

fn apply_mask(v: &mut [f64], mask: Option<&Vec<f64>>) {
    if let Some(m) = mask {
        v.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    }
}

fn forward_step(
    params: &ParameterSet,
    cfg: &RunConfig,
    seq: &Sequence,
    i: usize,
    bank: &mut SubStateBank,
    x_mask: Option<&Vec<f64>>,
    h_mask: Option<&Vec<f64>>,
) -> Result<StepTape> {
    let step = seq.steps[i];
    let enc = build_input(i, seq, params, &cfg.model.bucket_edges, cfg.slot_scheme())?;
    let mut xh = project_input(params, &enc.x);
    apply_mask(&mut xh, x_mask);
    let gru = step_all(bank, params, &xh, step.dt, step.dd, &cfg.dynamics);
    let d_e = params.layout().dims.d_e;
    let (mut h_dec, agg) = aggregate(
        bank,
        enc.context(d_e),
        params,
        cfg.model.aggregation,
        cfg.dynamics.temperature,
    );
    apply_mask(&mut h_dec, h_mask);
    let h_proj = project_decision(params, &h_dec);
    Ok(StepTape {
        poi: step.poi,
        enc,
        xh,
        x_mask: x_mask.cloned(),
        dt: step.dt,
        dd: step.dd,
        gru,
        bank: bank.clone(),
        agg,
        h_dec,
        h_mask: h_mask.cloned(),
        h_proj,
        slate: Vec::new(),
        dlogits: Vec::new(),
    })
}

/// One recorded training pass.
#[derive(Debug, Clone)]
pub struct Tape {
    steps: Vec<StepTape>,
    /// Summed over steps.
    pub loss: LossTerms,
    pub step_losses: Vec<LossTerms>,
}

impl Tape {
    pub fn n_targets(&self) -> usize {
        self.steps.len()
    }

    pub fn h_proj(&self, i: usize) -> &[f64] {
        &self.steps[i].h_proj
    }

    pub fn slate(&self, i: usize) -> &[usize] {
        &self.steps[i].slate
    }
}

/// Training forward over `seq`: one prediction per transition, loss summed
/// over steps.
pub fn forward_train(params: &ParameterSet, cfg: &RunConfig, seq: &Sequence, plan: &Plan) -> Result<Tape> {
    let dims = params.layout().dims;
    let n = seq.n_targets();
    let mut bank = SubStateBank::zeros(dims.k, dims.d_s);
    let mut steps = Vec::with_capacity(n);
    let mut step_losses = Vec::with_capacity(n);
    let mut loss = LossTerms::default();
    let l = params.layout();
    let emb = params.get(&l.poi_emb);
    let bias = params.get(&l.poi_bias);
    for i in 0..n {
        let mut st = forward_step(params, cfg, seq, i, &mut bank, plan.x_masks.get(i), plan.h_masks.get(i))?;
        st.slate = std::iter::once(seq.steps[i + 1].poi)
            .chain(plan.negatives[i].iter().copied())
            .collect();
        let logits: Vec<f64> = st
            .slate
            .iter()
            .map(|&j| dot(&st.h_proj, &emb[j * dims.d_e..(j + 1) * dims.d_e]) + bias[j])
            .collect();
        let (terms, dlogits) = slate_loss(&logits, &cfg.objective);
        st.dlogits = dlogits;
        loss += terms;
        step_losses.push(terms);
        steps.push(st);
    }
    Ok(Tape {
        steps,
        loss,
        step_losses,
    })
}

/// Adds `scale · ∂(tape.loss.total)/∂Θ` into `grad`.
pub fn backward(params: &ParameterSet, cfg: &RunConfig, tape: &Tape, scale: f64, grad: &mut [f64]) {
    let l = params.layout().clone();
    let d = l.dims;
    let emb = params.get(&l.poi_emb);
    let mut carry = vec![0.0; d.d_state()];
    for st in tape.steps.iter().rev() {
        // scoring
        let mut dh_proj = vec![0.0; d.d_e];
        for (&j, &g) in st.slate.iter().zip(&st.dlogits) {
            let g = g * scale;
            let e = j * d.d_e;
            for t in 0..d.d_e {
                dh_proj[t] += g * emb[e + t];
                grad[l.poi_emb.start + e + t] += g * st.h_proj[t];
            }
            grad[l.poi_bias.start + j] += g;
        }

        // decision projection and dropout
        outer_acc(&mut grad[l.out_w.clone()], &dh_proj, &st.h_dec);
        add_assign(&mut grad[l.out_b.clone()], &dh_proj);
        let mut dh = vec![0.0; d.d_state()];
        matvec_t_acc(params.get(&l.out_w), &dh_proj, &mut dh);
        apply_mask(&mut dh, st.h_mask.as_ref());

        // aggregation
        let mut ds = carry;
        let mut dc = vec![0.0; d.d_context()];
        aggregate_backward(
            &st.bank,
            st.enc.context(d.d_e),
            params,
            &st.agg,
            cfg.dynamics.temperature,
            &dh,
            &mut ds,
            &mut dc,
            grad,
        );

        // recurrences and decay
        let mut dxh = vec![0.0; d.d_s];
        let mut next = vec![0.0; d.d_state()];
        for k in 0..d.k {
            let blk = k * d.d_s..(k + 1) * d.d_s;
            let (ds_prev, dgamma) =
                state_update_backward(params, k, &st.gru[k], &st.xh, &ds[blk.clone()], &mut dxh, grad);
            next[blk].copy_from_slice(&ds_prev);
            let (dl, dm) = decay_k_backward(params, k, st.gru[k].gamma, st.dt, st.dd, &cfg.dynamics);
            grad[l.raw_lambda.start + k] += dgamma * dl;
            grad[l.raw_mu.start + k] += dgamma * dm;
        }
        carry = next;

        // input projection and encoders
        apply_mask(&mut dxh, st.x_mask.as_ref());
        outer_acc(&mut grad[l.in_w.clone()], &dxh, &st.enc.x);
        add_assign(&mut grad[l.in_b.clone()], &dxh);
        let mut dx = vec![0.0; d.d_x()];
        matvec_t_acc(params.get(&l.in_w), &dxh, &mut dx);
        add_assign(&mut dx[d.d_e..], &dc);
        build_input_backward(params, st.poi, &st.enc, &dx, grad);
    }
}

/// Summed loss of one planned pass; the function gradient checks differentiate.
pub fn trajectory_loss(params: &ParameterSet, cfg: &RunConfig, seq: &Sequence, plan: &Plan) -> Result<LossTerms> {
    Ok(forward_train(params, cfg, seq, plan)?.loss)
}

/// State after rolling a whole context forward without dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub h_proj: Vec<f64>,
    /// Projected decision state after each event.
    pub step_h_proj: Vec<Vec<f64>>,
    /// Aggregation weights at each step.
    pub alphas: Vec<Vec<f64>>,
    pub bank: SubStateBank,
}

/// Inference rollout over every event of `seq`; the decision state comes
/// from the last processed event.
pub fn rollout(params: &ParameterSet, cfg: &RunConfig, seq: &Sequence) -> Result<Rollout> {
    let dims = params.layout().dims;
    let mut bank = SubStateBank::zeros(dims.k, dims.d_s);
    let mut alphas = Vec::with_capacity(seq.len());
    let mut step_h_proj = Vec::with_capacity(seq.len());
    for i in 0..seq.len() {
        let st = forward_step(params, cfg, seq, i, &mut bank, None, None)?;
        alphas.push(st.agg.alpha);
        step_h_proj.push(st.h_proj);
    }
    let h_proj = step_h_proj
        .last()
        .cloned()
        .unwrap_or_else(|| project_decision(params, &vec![0.0; dims.d_state()]));
    Ok(Rollout {
        h_proj,
        step_h_proj,
        alphas,
        bank,
    })
}

/// Scores of every catalog POI after `seq`.
pub fn predict(params: &ParameterSet, cfg: &RunConfig, seq: &Sequence) -> Result<Vec<f64>> {
    Ok(score_all(&rollout(params, cfg, seq)?.h_proj, params))
}
