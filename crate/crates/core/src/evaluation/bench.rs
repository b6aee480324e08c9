//! Single-query inference timing and analytic cost estimates.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::ingest::{Sequence, Step};
use crate::model::{predict, rollout};
use crate::params::{Dims, ParameterSet};

pub const WARMUP: usize = 10;
pub const MIN_REPETITIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub latency_ms: f64,
    pub throughput_qps: f64,
    /// Peak resident set of the process, when the platform reports it.
    pub peak_memory_mb: Option<f64>,
    pub flops_estimate: f64,
    /// The part of the estimate spent in the K sub-state recurrences.
    pub recurrent_flops: f64,
    pub n_pois: usize,
    pub seq_len: usize,
    pub repetitions: usize,
    pub n_params: usize,
}

/// Floating-point operations of one step of the sub-state recurrence and
/// aggregation, counting 2 per multiply-add: gates (`12 d_s²`), the scorer
/// (`2 d_s (d_s + d_c) + 2 d_s`), and the decision projection (`2 d_e d_s`),
/// all per sub-state.
pub fn recurrent_flops_per_step(d: &Dims) -> f64 {
    let ds = d.d_s as f64;
    let per_state = 12.0 * ds * ds + 2.0 * ds * (ds + d.d_context() as f64) + 2.0 * ds + 2.0 * d.d_e as f64 * ds;
    d.k as f64 * per_state
}

/// Per-step cost that does not depend on K: spatial mixing and input
/// projection.
pub fn encoding_flops_per_step(d: &Dims) -> f64 {
    2.0 * (d.d_spatial * d.d_spatial_in()) as f64 + 2.0 * (d.d_s * d.d_x()) as f64
}

pub fn scoring_flops(d: &Dims) -> f64 {
    2.0 * (d.n_pois * d.d_e) as f64
}

/// A random query sequence of `n` events over the parameters' catalog.
pub fn synthetic_query(n_pois: usize, n: usize, seed: u64) -> Sequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 1_333_324_800i64;
    let steps = (0..n)
        .map(|i| {
            let dt = if i == 0 { 0.0 } else { rng.random_range(600.0..86_400.0) };
            t += dt as i64;
            let (dlat, dlon) = if i == 0 {
                (0.0, 0.0)
            } else {
                (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05))
            };
            Step {
                poi: rng.random_range(0..n_pois),
                timestamp: t,
                dt,
                dd: if i == 0 { 0.0 } else { rng.random_range(0.0..8.0) },
                dlat,
                dlon,
            }
        })
        .collect();
    Sequence { steps }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median seconds of one call of `f` over `reps` timed runs after
/// [`WARMUP`] untimed ones.
pub fn time_median<T>(reps: usize, mut f: impl FnMut() -> T) -> f64 {
    for _ in 0..WARMUP {
        std::hint::black_box(f());
    }
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed().as_secs_f64()
        })
        .collect();
    median(&mut times)
}

/// Median seconds of a rollout (no scoring) over `seq`.
pub fn time_rollout(params: &ParameterSet, cfg: &RunConfig, seq: &Sequence, reps: usize) -> Result<f64> {
    rollout(params, cfg, seq)?;
    Ok(time_median(reps, || rollout(params, cfg, seq).expect("checked above")))
}

/// End-to-end single-query inference timing (rollout plus full scoring) on
/// the calling thread.
pub fn bench(params: &ParameterSet, cfg: &RunConfig, seq_len: usize, repetitions: usize) -> Result<BenchReport> {
    let dims = params.layout().dims;
    let seq = synthetic_query(dims.n_pois, seq_len, 0);
    predict(params, cfg, &seq)?;
    let reps = repetitions.max(MIN_REPETITIONS);
    for _ in 0..WARMUP {
        std::hint::black_box(predict(params, cfg, &seq)?);
    }
    let mut times = Vec::with_capacity(reps);
    let total = Instant::now();
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(predict(params, cfg, &seq)?);
        times.push(start.elapsed().as_secs_f64());
    }
    let wall = total.elapsed().as_secs_f64();
    let n = seq_len as f64;
    let recurrent = n * recurrent_flops_per_step(&dims);
    Ok(BenchReport {
        latency_ms: median(&mut times) * 1e3,
        throughput_qps: reps as f64 / wall,
        peak_memory_mb: peak_memory_mb(),
        flops_estimate: recurrent + n * encoding_flops_per_step(&dims) + scoring_flops(&dims),
        recurrent_flops: recurrent,
        n_pois: dims.n_pois,
        seq_len,
        repetitions: reps,
        n_params: params.len(),
    })
}

/// Peak resident set size from `/proc/self/status`.
pub fn peak_memory_mb() -> Option<f64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: f64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb / 1024.0)
}

/// Least-squares slope of `y = a·x` and the coefficient of determination
/// against the mean of `y`.
pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let a = sxy / sxx;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - a * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    (a, 1.0 - ss_res / ss_tot)
}
