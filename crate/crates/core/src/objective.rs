//! Candidate scoring, negative sampling, and the slate losses.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ObjectiveConfig;
use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, softmax};
use crate::params::ParameterSet;

/// `φ_l = h_proj · e_l + b_l` for a dense POI index.
pub fn score(h_proj: &[f64], poi: usize, params: &ParameterSet) -> Result<f64> {
    let l = params.layout();
    let d_e = l.dims.d_e;
    if poi >= l.dims.n_pois {
        return Err(Error::UnknownPoi(poi as u64));
    }
    let e = &params.get(&l.poi_emb)[poi * d_e..(poi + 1) * d_e];
    Ok(dot(h_proj, e) + params.get(&l.poi_bias)[poi])
}

/// Scores of every POI in the catalog.
pub fn score_all(h_proj: &[f64], params: &ParameterSet) -> Vec<f64> {
    let l = params.layout();
    let d_e = l.dims.d_e;
    params
        .get(&l.poi_emb)
        .chunks_exact(d_e)
        .zip(params.get(&l.poi_bias))
        .map(|(e, b)| dot(h_proj, e) + b)
        .collect()
}

/// `n_neg` distinct indices from `0..n_pois`, none equal to `exclude`,
/// uniformly without replacement.
pub fn sample_negatives<R: Rng + ?Sized>(
    rng: &mut R,
    n_pois: usize,
    exclude: usize,
    n_neg: usize,
) -> Result<Vec<usize>> {
    if n_pois <= n_neg {
        return Err(Error::config(
            "objective.n_neg",
            format!("catalog of {n_pois} POIs is too small for {n_neg} negatives"),
        ));
    }
    Ok(rand::seq::index::sample(rng, n_pois - 1, n_neg)
        .into_iter()
        .map(|j| if j >= exclude { j + 1 } else { j })
        .collect())
}

/// `y_0 = 1 − ε + ε/C`, `y_j = ε/C`.
///
/// `ε/C` is rounded down to a multiple of 2⁻⁵³ and `y_0` takes the rest, so
/// every label and every partial sum is exact and `Σ y` is exactly 1 in any
/// summation order. Off-target labels move by less than 2⁻⁵³ and `y_0` by
/// less than `C · 2⁻⁵³`.
pub fn smoothed_labels(eps: f64, c: usize) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::config("objective.label_smoothing", "must satisfy 0 <= eps < 1"));
    }
    if c < 2 {
        return Err(Error::config("objective.n_neg", "slate needs at least 2 candidates"));
    }
    const ULP: f64 = 1.0 / (1u64 << 53) as f64;
    let off = (eps / c as f64 / ULP).floor() * ULP;
    let mut y = vec![off; c];
    y[0] = 1.0 - (c - 1) as f64 * off;
    Ok(y)
}

/// `−Σ y_j log softmax(z)_j` via a max-shifted log-sum-exp.
pub fn ce_loss(logits: &[f64], y: &[f64]) -> f64 {
    let lse = log_sum_exp(logits);
    -logits.iter().zip(y).map(|(z, t)| t * (z - lse)).sum::<f64>()
}

/// Slate positions `1..` of the `k_h` highest negative logits, ties to the
/// smaller position.
pub fn hardest_negatives(logits: &[f64], k_h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (1..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.truncate(k_h);
    idx
}

/// Mean hinge `max(0, m − (z_0 − z_j))` over the hardest negatives.
pub fn bpr_hard_loss(logits: &[f64], k_h: usize, margin: f64) -> f64 {
    let hard = hardest_negatives(logits, k_h);
    hard.iter()
        .map(|&j| (margin - (logits[0] - logits[j])).max(0.0))
        .sum::<f64>()
        / hard.len() as f64
}

pub fn total_loss(ce: f64, bpr: f64, beta: f64) -> f64 {
    ce + beta * bpr
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub ce: f64,
    pub bpr: f64,
    pub total: f64,
}

impl std::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, o: Self) {
        self.ce += o.ce;
        self.bpr += o.bpr;
        self.total += o.total;
    }
}

impl LossTerms {
    pub fn scaled(self, s: f64) -> Self {
        LossTerms {
            ce: self.ce * s,
            bpr: self.bpr * s,
            total: self.total * s,
        }
    }
}

/// Loss of one slate (index 0 = positive) and its gradient w.r.t. the logits.
pub fn slate_loss(logits: &[f64], cfg: &ObjectiveConfig) -> (LossTerms, Vec<f64>) {
    let c = logits.len();
    let y = smoothed_labels(cfg.label_smoothing, c).expect("validated objective config");
    let ce = ce_loss(logits, &y);
    let y_sum: f64 = y.iter().sum();
    let p = softmax(logits);
    let mut grad: Vec<f64> = p.iter().zip(&y).map(|(p, y)| p * y_sum - y).collect();

    let hard = hardest_negatives(logits, cfg.hard_negatives);
    let inv = 1.0 / hard.len() as f64;
    let mut bpr = 0.0;
    for &j in &hard {
        let h = cfg.margin - (logits[0] - logits[j]);
        if h > 0.0 {
            bpr += h;
            grad[0] -= cfg.bpr_weight * inv;
            grad[j] += cfg.bpr_weight * inv;
        }
    }
    bpr *= inv;
    let terms = LossTerms {
        ce,
        bpr,
        total: total_loss(ce, bpr, cfg.bpr_weight),
    };
    (terms, grad)
}
