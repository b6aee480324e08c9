//! Brute-force evaluators shared by the integration tests.

#![allow(dead_code)]

use adspoi::config::RunConfig;
use adspoi::evaluation::evaluate_instances;
use adspoi::ingest::{split_leave_one_out, synth_generate, SplitKind, SynthConfig};
use adspoi::model::predict;
use adspoi::params::init_params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Position of `target` after sorting every index by score, highest
/// first, equal scores in index order.
pub fn brute_rank(scores: &[f64], target: usize) -> usize {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    order.iter().position(|&i| i == target).unwrap() + 1
}

/// `[HR@5, HR@10, NDCG@5, NDCG@10, MRR]` as plain means.
pub fn brute_metrics(ranks: &[usize]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for &r in ranks {
        let r = r as f64;
        let dcg = std::f64::consts::LN_2 / (r + 1.0).ln();
        out[0] += if r <= 5.0 { 1.0 } else { 0.0 };
        out[1] += if r <= 10.0 { 1.0 } else { 0.0 };
        out[2] += if r <= 5.0 { dcg } else { 0.0 };
        out[3] += if r <= 10.0 { dcg } else { 0.0 };
        out[4] += 1.0 / r;
    }
    out.map(|v| v / ranks.len() as f64)
}

pub struct MetricCheck {
    pub n_instances: usize,
    pub rank_mismatches: usize,
    pub tied_targets: usize,
    pub max_metric_error: f64,
}

/// Scores `n` held-out instances of a small synthetic dataset with the
/// library's full-ranking harness and with [`brute_rank`]. POIs are paired
/// up with identical embeddings and biases so every score is tied with
/// another and the tie-break is exercised.
pub fn metric_oracle(n: usize, seed: u64) -> MetricCheck {
    let mut synth = SynthConfig::two_regime();
    synth.n_users = n.div_ceil(2);
    synth.steps = 10;
    let data = synth_generate(&synth, seed).unwrap();
    let split = split_leave_one_out(&data);
    let mut cfg = RunConfig::default();
    cfg.model.d_e = 8;
    cfg.model.k = 2;
    cfg.model.d_s = 4;
    let n_pois = split.catalog.len();
    let mut params = init_params(&cfg, n_pois, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in params.as_mut_slice() {
        *v += rng.random_range(-0.5..0.5);
    }
    let d_e = cfg.model.d_e;
    let emb = params.named_mut("poi.embedding").unwrap();
    for j in (0..n_pois - 1).step_by(2) {
        let (a, b) = emb.split_at_mut((j + 1) * d_e);
        b[..d_e].copy_from_slice(&a[j * d_e..]);
    }
    let bias = params.named_mut("poi.bias").unwrap();
    for j in (0..n_pois - 1).step_by(2) {
        bias[j + 1] = bias[j];
    }

    let mut instances = split.instances(SplitKind::Test);
    instances.extend(split.instances(SplitKind::Val));
    instances.truncate(n);
    let ev = evaluate_instances(&params, &cfg, &split.catalog, &instances).unwrap();

    let mut ranks = Vec::new();
    let mut tied = 0;
    for inst in &instances {
        let seq = split.catalog.sequence(&inst.context).unwrap();
        let scores = predict(&params, &cfg, &seq).unwrap();
        let target = split.catalog.index_of(inst.target).unwrap();
        if scores
            .iter()
            .enumerate()
            .any(|(i, &s)| i != target && s == scores[target])
        {
            tied += 1;
        }
        ranks.push(brute_rank(&scores, target));
    }
    let want = brute_metrics(&ranks);
    MetricCheck {
        n_instances: instances.len(),
        rank_mismatches: ranks.iter().zip(&ev.ranks).filter(|(a, b)| a != b).count(),
        tied_targets: tied,
        max_metric_error: want
            .iter()
            .zip(ev.metrics.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max),
    }
}
