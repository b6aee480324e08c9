//! Mean batch loss and its exact gradient, computed per trajectory in
//! parallel and reduced in a fixed order.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::ingest::Sequence;
use crate::model::{backward, forward_train, Plan};
use crate::objective::LossTerms;
use crate::params::ParameterSet;

/// Trajectories handled by one parallel task. Fixed, so the reduction tree
/// does not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradient {
    pub grad: Vec<f64>,
    /// Mean over all supervised steps in the batch.
    pub loss: LossTerms,
    pub n_steps: usize,
}

/// `∂/∂Θ` of the mean per-step loss over `batch`. Tied transition blocks
/// receive the sum over their copies.
pub fn compute_gradients(
    params: &ParameterSet,
    cfg: &RunConfig,
    batch: &[(&Sequence, &Plan)],
    deterministic: bool,
) -> Result<BatchGradient> {
    let n_steps: usize = batch.iter().map(|(s, _)| s.n_targets()).sum();
    let scale = if n_steps == 0 { 0.0 } else { 1.0 / n_steps as f64 };
    let p = params.len();
    let chunk_grad = |chunk: &[(&Sequence, &Plan)]| -> Result<(Vec<f64>, LossTerms)> {
        let mut g = vec![0.0; p];
        let mut loss = LossTerms::default();
        for (seq, plan) in chunk {
            let tape = forward_train(params, cfg, seq, plan)?;
            backward(params, cfg, &tape, scale, &mut g);
            loss += tape.loss;
        }
        Ok((g, loss))
    };
    let add = |mut a: (Vec<f64>, LossTerms), b: (Vec<f64>, LossTerms)| {
        crate::linalg::add_assign(&mut a.0, &b.0);
        a.1 += b.1;
        a
    };
    let (mut grad, loss) = if deterministic {
        let parts: Vec<(Vec<f64>, LossTerms)> = batch.par_chunks(CHUNK).map(chunk_grad).collect::<Result<_>>()?;
        parts
            .into_iter()
            .reduce(add)
            .unwrap_or_else(|| (vec![0.0; p], LossTerms::default()))
    } else {
        batch
            .par_chunks(CHUNK)
            .map(chunk_grad)
            .try_reduce(|| (vec![0.0; p], LossTerms::default()), |a, b| Ok(add(a, b)))?
    };
    params.layout().tie_gradient(&mut grad);
    Ok(BatchGradient {
        grad,
        loss: loss.scaled(scale),
        n_steps,
    })
}

/// Mean per-step loss of `batch` without gradients.
pub fn batch_loss(params: &ParameterSet, cfg: &RunConfig, batch: &[(&Sequence, &Plan)]) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for (seq, plan) in batch {
        total += forward_train(params, cfg, seq, plan)?.loss.total;
        n += seq.n_targets();
    }
    Ok(if n == 0 { 0.0 } else { total / n as f64 })
}
