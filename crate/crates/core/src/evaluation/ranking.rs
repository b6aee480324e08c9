//! Full-ranking evaluation over every catalog POI.

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::ingest::{Catalog, DatasetSplit, RankingInstance, Sequence, SplitKind};
use crate::model::{predict, rollout};
use crate::objective::score_all;
use crate::params::ParameterSet;

use super::metrics::{rank_of, Metrics};

/// Rank of the instance's target after rolling its context forward.
pub fn rank_full(params: &ParameterSet, cfg: &RunConfig, catalog: &Catalog, inst: &RankingInstance) -> Result<usize> {
    let seq = catalog.sequence(&inst.context)?;
    let target = catalog.index_of(inst.target)?;
    Ok(rank_of(&predict(params, cfg, &seq)?, target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Per-instance ranks in instance order.
    pub ranks: Vec<usize>,
    pub metrics: Metrics,
}

impl Evaluation {
    pub fn reciprocal_ranks(&self) -> Vec<f64> {
        self.ranks.iter().map(|&r| 1.0 / r as f64).collect()
    }
}

/// Ranks `instances` in parallel; the mean is taken in instance order, so
/// the result does not depend on thread count.
pub fn evaluate_instances(
    params: &ParameterSet,
    cfg: &RunConfig,
    catalog: &Catalog,
    instances: &[&RankingInstance],
) -> Result<Evaluation> {
    let ranks = instances
        .par_iter()
        .map(|inst| rank_full(params, cfg, catalog, inst))
        .collect::<Result<Vec<_>>>()?;
    let metrics = Metrics::from_ranks(&ranks);
    Ok(Evaluation { ranks, metrics })
}

pub fn evaluate(params: &ParameterSet, cfg: &RunConfig, split: &DatasetSplit, which: SplitKind) -> Result<Evaluation> {
    evaluate_instances(params, cfg, &split.catalog, &split.instances(which))
}

/// Teacher-forced HR@1 over every supervised step of `seqs`: the fraction of
/// steps whose true next POI is ranked first among all POIs.
pub fn train_hit_rate(params: &ParameterSet, cfg: &RunConfig, seqs: &[Sequence]) -> Result<f64> {
    let per_seq = seqs
        .par_iter()
        .map(|seq| {
            let r = rollout(params, cfg, seq)?;
            let hits = (0..seq.n_targets())
                .filter(|&i| rank_of(&score_all(&r.step_h_proj[i], params), seq.steps[i + 1].poi) == 1)
                .count();
            Ok((hits, seq.n_targets()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hits, total) = per_seq.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(if total == 0 { 0.0 } else { hits as f64 / total as f64 })
}
