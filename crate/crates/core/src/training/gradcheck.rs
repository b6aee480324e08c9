//! Central finite differences against the reverse-mode gradient.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::{Catalog, CheckIn, Sequence, Trajectory};
use crate::model::{sample_plan, Plan};
use crate::params::{init_params, ParameterSet, TRANSITION_BLOCKS};

use super::gradients::{batch_loss, compute_gradients};

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero compare on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

/// Above this many coordinates only a random 10% are perturbed.
pub const FULL_CHECK_LIMIT: usize = 5_000;

/// A fixed small problem: parameters, data, and pre-drawn randomness.
#[derive(Debug, Clone)]
pub struct GradCheckProblem {
    pub cfg: RunConfig,
    pub params: ParameterSet,
    pub seqs: Vec<Sequence>,
    pub plans: Vec<Plan>,
}

impl GradCheckProblem {
    /// Builds the problem described by `base.gradcheck` on top of `base`.
    /// Parameters are jittered away from their initial values so biases and
    /// embeddings are generic rather than zero or tiny.
    pub fn new(base: &RunConfig, seed: u64) -> Result<Self> {
        let g = &base.gradcheck;
        let cfg = g.apply(base);
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let coords: Vec<(f64, f64)> = (0..g.n_pois)
            .map(|_| {
                (
                    40.7 + rng.random_range(-0.05..0.05),
                    -74.0 + rng.random_range(-0.05..0.05),
                )
            })
            .collect();
        let mut events = Vec::new();
        for user in 0..g.batch as u64 {
            let mut t = 1_333_324_800 + rng.random_range(0..86_400);
            let mut prev = usize::MAX;
            for _ in 0..g.seq_len {
                let mut poi = rng.random_range(0..g.n_pois);
                while poi == prev {
                    poi = rng.random_range(0..g.n_pois);
                }
                prev = poi;
                events.push(CheckIn {
                    user_id: user,
                    poi_id: poi as u64,
                    timestamp: t,
                    lat: coords[poi].0,
                    lon: coords[poi].1,
                });
                t += rng.random_range(600..172_800);
            }
        }
        let catalog = Catalog::new(
            coords
                .iter()
                .enumerate()
                .map(|(i, &(lat, lon))| crate::ingest::Poi { id: i as u64, lat, lon })
                .collect(),
        );
        let seqs = (0..g.batch as u64)
            .map(|u| {
                let evs: Vec<CheckIn> = events.iter().filter(|c| c.user_id == u).copied().collect();
                catalog.sequence(&Trajectory::new(u, evs))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut params = init_params(&cfg, g.n_pois, seed);
        let noise = Normal::new(0.0, 0.1).expect("valid normal");
        for v in params.as_mut_slice() {
            *v += noise.sample(&mut rng);
        }
        if params.layout().shared_transitions {
            retie(&mut params);
        }
        let plans = seqs
            .iter()
            .map(|s| sample_plan(&mut rng, s, &params, &cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(GradCheckProblem {
            cfg,
            params,
            seqs,
            plans,
        })
    }

    fn batch(&self) -> Vec<(&Sequence, &Plan)> {
        self.seqs.iter().zip(&self.plans).collect()
    }

    pub fn loss(&self, params: &ParameterSet) -> Result<f64> {
        batch_loss(params, &self.cfg, &self.batch())
    }

    pub fn gradient(&self) -> Result<Vec<f64>> {
        Ok(compute_gradients(&self.params, &self.cfg, &self.batch(), true)?.grad)
    }
}

/// Copies sub-state 0's transition blocks over the others.
fn retie(params: &mut ParameterSet) {
    let k = params.layout().dims.k;
    for name in TRANSITION_BLOCKS {
        let v = params.named_mut(name).expect("transition block");
        let per = v.len() / k;
        let first = v[..per].to_vec();
        for c in 1..k {
            v[c * per..(c + 1) * per].copy_from_slice(&first);
        }
    }
}

/// Scales the analytic gradient of one block before comparison, to confirm
/// the check notices a wrong gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradMutation {
    pub block: String,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub n_params: usize,
    pub n_checked: usize,
    pub fd_step: f64,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_block: String,
    pub analytic: f64,
    pub numeric: f64,
    /// Worst relative error within each block.
    pub per_block: BTreeMap<String, f64>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares every coordinate (or a seeded 10% subsample above
/// [`FULL_CHECK_LIMIT`]) with central differences of step `fd_step`. Tied
/// coordinates are perturbed together.
pub fn grad_check(
    problem: &GradCheckProblem,
    fd_step: f64,
    mutation: Option<&GradMutation>,
) -> Result<GradCheckReport> {
    let layout = problem.params.layout().clone();
    let mut analytic = problem.gradient()?;
    if let Some(m) = mutation {
        let b = layout
            .block(&m.block)
            .ok_or_else(|| Error::config("mutation.block", format!("no block named {:?}", m.block)))?;
        analytic[b.range()].iter_mut().for_each(|g| *g *= m.factor);
    }

    let n = layout.len;
    let coords: Vec<usize> = if n <= FULL_CHECK_LIMIT {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6772_6164);
        let mut v: Vec<usize> = rand::seq::index::sample(&mut rng, n, n / 10).into_vec();
        v.sort_unstable();
        v
    };

    let mut report = GradCheckReport {
        n_params: n,
        n_checked: coords.len(),
        fd_step,
        max_rel_error: 0.0,
        worst_index: 0,
        worst_block: String::new(),
        analytic: 0.0,
        numeric: 0.0,
        per_block: layout.blocks.iter().map(|b| (b.name.clone(), 0.0)).collect(),
    };
    let mut work = problem.params.clone();
    for &i in &coords {
        let group = layout.tied_group(i);
        let base: Vec<f64> = group.iter().map(|&j| work.as_slice()[j]).collect();
        let set = |w: &mut ParameterSet, delta: f64| {
            for (&j, &b) in group.iter().zip(&base) {
                w.as_mut_slice()[j] = b + delta;
            }
        };
        set(&mut work, fd_step);
        let up = problem.loss(&work)?;
        set(&mut work, -fd_step);
        let down = problem.loss(&work)?;
        set(&mut work, 0.0);
        let numeric = (up - down) / (2.0 * fd_step);
        let err = rel_error(analytic[i], numeric);
        let name = &layout.block_of(i).name;
        let slot = report.per_block.get_mut(name).expect("known block");
        *slot = slot.max(err);
        if err > report.max_rel_error || report.worst_block.is_empty() {
            report.max_rel_error = err;
            report.worst_index = i;
            report.worst_block = name.clone();
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
    }
    Ok(report)
}
