//! Multi-seed aggregation and the JSON/CSV report formats.

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::{DatasetSplit, SplitKind};
use crate::training::{train, TrainState};

use super::metrics::{Metrics, METRIC_NAMES};
use super::ranking::{evaluate, Evaluation};

pub const TIE_BREAK: &str = "pessimistic by catalog index: equal-score POIs with a smaller index rank ahead";

/// Labels identifying what a report is about.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportLabels {
    pub dataset: String,
    pub variant: String,
    pub dataset_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub dataset: String,
    pub variant: String,
    pub config_hash: String,
    pub dataset_fingerprint: String,
    pub split: String,
    pub n_instances: usize,
    pub tie_break: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<Metrics>,
    pub mean: Metrics,
    /// Sample standard deviation over seeds; absent for a single seed.
    pub std: Option<Metrics>,
    pub single_seed: bool,
    /// Per-instance target ranks for each seed, in instance order.
    pub ranks: Vec<Vec<usize>>,
}

/// Mean and sample standard deviation of each metric. Values are summed in
/// sorted order, so the result does not depend on seed order.
pub fn aggregate(per_seed: &[Metrics]) -> (Metrics, Option<Metrics>) {
    let n = per_seed.len();
    if n == 0 {
        return (Metrics::default(), None);
    }
    let mut mean = [0.0; 5];
    let mut std = [0.0; 5];
    for j in 0..5 {
        let mut v: Vec<f64> = per_seed.iter().map(|m| m.values()[j]).collect();
        v.sort_by(f64::total_cmp);
        let mu = v.iter().sum::<f64>() / n as f64;
        mean[j] = mu;
        if n > 1 {
            let mut dev: Vec<f64> = v.iter().map(|x| (x - mu).powi(2)).collect();
            dev.sort_by(f64::total_cmp);
            std[j] = (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt();
        }
    }
    (Metrics::from_values(mean), (n > 1).then(|| Metrics::from_values(std)))
}

fn split_name(which: SplitKind) -> &'static str {
    match which {
        SplitKind::Val => "val",
        SplitKind::Test => "test",
    }
}

impl RankingReport {
    pub fn from_evaluations(
        labels: &ReportLabels,
        config_hash: &str,
        which: SplitKind,
        seeds: &[u64],
        evals: &[Evaluation],
    ) -> Self {
        let per_seed: Vec<Metrics> = evals.iter().map(|e| e.metrics).collect();
        let (mean, std) = aggregate(&per_seed);
        RankingReport {
            dataset: labels.dataset.clone(),
            variant: labels.variant.clone(),
            config_hash: config_hash.to_string(),
            dataset_fingerprint: labels.dataset_fingerprint.clone(),
            split: split_name(which).to_string(),
            n_instances: evals.first().map_or(0, |e| e.ranks.len()),
            tie_break: TIE_BREAK.to_string(),
            seeds: seeds.to_vec(),
            per_seed,
            mean,
            single_seed: seeds.len() == 1,
            std,
            ranks: evals.iter().map(|e| e.ranks.clone()).collect(),
        }
    }

    /// Per-instance reciprocal ranks pooled over seeds, seed-major. Two
    /// reports over the same split and seeds pair up element by element.
    pub fn pooled_reciprocal_ranks(&self) -> Vec<f64> {
        self.ranks.iter().flatten().map(|&r| 1.0 / r as f64).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per seed and metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,variant,split,seed,metric,value\n");
        for (seed, m) in self.seeds.iter().zip(&self.per_seed) {
            for (name, v) in m.named() {
                out.push_str(&format!(
                    "{},{},{},{seed},{name},{v}\n",
                    self.dataset, self.variant, self.split
                ));
            }
        }
        out
    }
}

/// Merges reports into one tidy table of per-metric mean and std.
pub fn tidy_csv(reports: &[RankingReport]) -> String {
    let mut out = String::from("dataset,variant,metric,mean,std\n");
    for r in reports {
        let std = r.std.map(|s| s.values());
        for (j, name) in METRIC_NAMES.iter().enumerate() {
            let sd = std.map_or(String::new(), |s| s[j].to_string());
            out.push_str(&format!(
                "{},{},{name},{},{sd}\n",
                r.dataset,
                r.variant,
                r.mean.values()[j]
            ));
        }
    }
    out
}

/// Trains one model per seed, evaluates the best parameters of each on
/// `which`, and aggregates.
pub fn multi_seed(
    split: &DatasetSplit,
    cfg: &RunConfig,
    seeds: &[u64],
    which: SplitKind,
    labels: &ReportLabels,
) -> Result<(RankingReport, Vec<TrainState>)> {
    if seeds.is_empty() {
        return Err(Error::config("run.seeds", "at least one seed is required"));
    }
    let mut states = Vec::with_capacity(seeds.len());
    let mut evals = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let state = train(split, cfg, seed)?;
        evals.push(evaluate(&state.best, cfg, split, which)?);
        states.push(state);
    }
    Ok((
        RankingReport::from_evaluations(labels, &cfg.hash(), which, seeds, &evals),
        states,
    ))
}
