//! Full-ranking evaluation, multi-seed reports, significance testing, and
//! the inference micro-benchmark.

mod bench;
mod metrics;
mod ranking;
mod report;
mod ttest;

pub use bench::{
    bench, encoding_flops_per_step, fit_through_origin, peak_memory_mb, recurrent_flops_per_step, scoring_flops,
    synthetic_query, time_median, time_rollout, BenchReport, MIN_REPETITIONS, WARMUP,
};
pub use metrics::{hr_at_k, ndcg_at_k, rank_of, reciprocal_rank, Metrics, METRIC_NAMES};
pub use ranking::{evaluate, evaluate_instances, rank_full, train_hit_rate, Evaluation};
pub use report::{aggregate, multi_seed, tidy_csv, RankingReport, ReportLabels, TIE_BREAK};
pub use ttest::{paired_ttest, TTest};
