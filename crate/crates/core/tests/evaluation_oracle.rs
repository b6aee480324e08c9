//! Full-ranking metrics and the paired t-test against independent
//! references.

mod common;

use adspoi::evaluation::{paired_ttest, Metrics};

#[test]
fn ranks_and_metrics_match_brute_force() {
    for seed in 0..3 {
        let r = common::metric_oracle(200, seed);
        assert_eq!(r.n_instances, 200);
        assert_eq!(r.rank_mismatches, 0, "seed {seed}");
        assert!(
            r.tied_targets > 100,
            "seed {seed}: only {} tied targets",
            r.tied_targets
        );
        assert!(r.max_metric_error <= 1e-12, "seed {seed}: {}", r.max_metric_error);
    }
}

#[test]
fn analytic_metric_points() {
    let m = Metrics::of_rank(3);
    assert_eq!(m.ndcg5, 0.5);
    assert_eq!(m.ndcg10, 0.5);
    assert_eq!(m.hr5, 1.0);
    assert_eq!(m.mrr, 1.0 / 3.0);
    assert_eq!(Metrics::of_rank(1).values(), [1.0; 5]);
    let m = Metrics::of_rank(11);
    assert_eq!([m.hr5, m.hr10, m.ndcg5, m.ndcg10], [0.0; 4]);
}

#[test]
fn brute_force_tie_break_is_pessimistic_by_index() {
    let scores = [0.5, 0.9, 0.5, 0.1, 0.5];
    assert_eq!(common::brute_rank(&scores, 0), 2);
    assert_eq!(common::brute_rank(&scores, 2), 3);
    assert_eq!(common::brute_rank(&scores, 4), 4);
    for t in 0..scores.len() {
        assert_eq!(adspoi::evaluation::rank_of(&scores, t), common::brute_rank(&scores, t));
    }
}

#[test]
fn paired_ttest_matches_scipy() {
    // scipy.stats.ttest_rel on these vectors
    let a = [0.52, 0.31, 0.77, 0.12, 0.45, 0.91, 0.33, 0.60, 0.25, 0.48];
    let b = [0.41, 0.35, 0.62, 0.10, 0.40, 0.70, 0.30, 0.55, 0.27, 0.39];
    let t = paired_ttest(&a, &b).unwrap();
    assert!((t.t - 2.682329435679688).abs() < 1e-6, "{t:?}");
    assert!((t.p - 0.025110058226215135).abs() < 1e-6, "{t:?}");
    assert_eq!(t.df, 9.0);
    assert_eq!(t.n, 10);

    let a = [1.0, 0.5, 0.25, 1.0 / 3.0, 1.0, 0.2, 0.5, 1.0, 0.125, 0.1];
    let b = [0.5, 0.5, 1.0 / 3.0, 0.25, 1.0, 0.25, 1.0, 0.5, 0.2, 0.1];
    let t = paired_ttest(&a, &b).unwrap();
    assert!((t.t - 0.40863150379752494).abs() < 1e-6, "{t:?}");
    assert!((t.p - 0.6923620180525825).abs() < 1e-6, "{t:?}");
    // swapping the arms flips t and keeps p
    let s = paired_ttest(&b, &a).unwrap();
    assert_eq!(s.t, -t.t);
    assert_eq!(s.p, t.p);
}
