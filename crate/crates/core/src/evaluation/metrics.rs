//! Rank of the target under full ranking and the metrics derived from it.

use serde::{Deserialize, Serialize};

/// 1-based rank of `target` among `scores`. Equal scores are broken by
/// index: a tied POI with a smaller index ranks ahead of the target.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    let mut rank = 1;
    for (i, &v) in scores.iter().enumerate() {
        if v > s || (v == s && i < target) {
            rank += 1;
        }
    }
    rank
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn reciprocal_rank(rank: usize) -> f64 {
    1.0 / rank as f64
}

/// The five reported metrics, each a mean over instances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub hr5: f64,
    pub hr10: f64,
    pub ndcg5: f64,
    pub ndcg10: f64,
    pub mrr: f64,
}

pub const METRIC_NAMES: [&str; 5] = ["HR@5", "HR@10", "NDCG@5", "NDCG@10", "MRR"];

impl Metrics {
    pub fn of_rank(rank: usize) -> Self {
        Metrics {
            hr5: hr_at_k(rank, 5),
            hr10: hr_at_k(rank, 10),
            ndcg5: ndcg_at_k(rank, 5),
            ndcg10: ndcg_at_k(rank, 10),
            mrr: reciprocal_rank(rank),
        }
    }

    /// Means over `ranks`, summed in the given order. Zero for no ranks.
    pub fn from_ranks(ranks: &[usize]) -> Self {
        if ranks.is_empty() {
            return Metrics::default();
        }
        let mut acc = [0.0; 5];
        for &r in ranks {
            let m = Metrics::of_rank(r).values();
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
        }
        let n = ranks.len() as f64;
        Metrics::from_values(acc.map(|a| a / n))
    }

    /// Values in [`METRIC_NAMES`] order.
    pub fn values(&self) -> [f64; 5] {
        [self.hr5, self.hr10, self.ndcg5, self.ndcg10, self.mrr]
    }

    pub fn from_values(v: [f64; 5]) -> Self {
        Metrics {
            hr5: v[0],
            hr10: v[1],
            ndcg5: v[2],
            ndcg10: v[3],
            mrr: v[4],
        }
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> {
        METRIC_NAMES.into_iter().zip(self.values())
    }
}
