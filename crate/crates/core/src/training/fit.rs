//! The epoch loop: shuffled mini-batches, Adam, validation MRR after every
//! epoch, and early stopping that keeps the best parameters seen.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::evaluate_instances;
use crate::ingest::{DatasetSplit, Sequence, SplitKind};
use crate::model::{sample_plan, Plan};
use crate::params::{init_params, ParameterSet};

use super::adam::{adam_step, decay_mask, AdamHyper, AdamState};
use super::gradients::compute_gradients;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-step training loss over the epoch, and its two parts.
    pub train_loss: f64,
    pub ce: f64,
    pub bpr: f64,
    pub val_mrr: f64,
}

/// Everything needed to continue a run. The epoch RNG is derived from
/// `(seed, epoch)`, so the seed and epoch counter stand in for RNG state.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParameterSet,
    pub best: ParameterSet,
    pub adam: AdamState,
    pub seed: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub best_mrr: f64,
    pub best_epoch: usize,
    pub since_improvement: usize,
    pub stopped: bool,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(params: ParameterSet, seed: u64) -> Self {
        let n = params.len();
        TrainState {
            best: params.clone(),
            params,
            adam: AdamState::new(n),
            seed,
            epoch: 0,
            best_mrr: f64::NEG_INFINITY,
            best_epoch: 0,
            since_improvement: 0,
            stopped: false,
            history: Vec::new(),
        }
    }
}

/// Training sequences: each user's most recent `max_seq_len` training
/// events, skipping users with fewer than two.
pub fn training_sequences(split: &DatasetSplit, cfg: &RunConfig) -> Result<Vec<Sequence>> {
    let seqs = split
        .train_trajectories()
        .filter(|t| t.len() >= 2)
        .map(|t| split.catalog.sequence(&t.most_recent(cfg.optim.max_seq_len)))
        .collect::<Result<Vec<_>>>()?;
    if seqs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(seqs)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Trains from scratch with full-ranking validation MRR.
pub fn train(split: &DatasetSplit, cfg: &RunConfig, seed: u64) -> Result<TrainState> {
    let state = TrainState::new(init_params(cfg, split.catalog.len(), seed), seed);
    train_from(split, cfg, state)
}

/// Continues `state` with full-ranking validation MRR, optionally on only
/// the first `val_subsample` users.
pub fn train_from(split: &DatasetSplit, cfg: &RunConfig, state: TrainState) -> Result<TrainState> {
    let mut val = split.instances(SplitKind::Val);
    if let Some(n) = cfg.optim.val_subsample {
        val.truncate(n);
    }
    train_with(split, cfg, state, &mut |p| {
        Ok(evaluate_instances(p, cfg, &split.catalog, &val)?.metrics.mrr)
    })
}

/// The loop itself, with validation supplied by the caller.
pub fn train_with(
    split: &DatasetSplit,
    cfg: &RunConfig,
    mut state: TrainState,
    validate: &mut dyn FnMut(&ParameterSet) -> Result<f64>,
) -> Result<TrainState> {
    cfg.validate()?;
    let seqs = training_sequences(split, cfg)?;
    if state.params.layout().dims.n_pois != split.catalog.len() {
        return Err(Error::config(
            "data.dataset",
            format!(
                "catalog has {} POIs but parameters expect {}",
                split.catalog.len(),
                state.params.layout().dims.n_pois
            ),
        ));
    }
    let hp = AdamHyper::from(&cfg.optim);
    let mask = decay_mask(state.params.layout());
    let patience = cfg.optim.patience;

    while !state.stopped && state.epoch < cfg.optim.epochs {
        let epoch = state.epoch + 1;
        let mut rng = epoch_rng(state.seed, epoch);
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(&mut rng);

        let (mut total, mut ce, mut bpr, mut steps) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(cfg.optim.batch_size) {
            let plans = chunk
                .iter()
                .map(|&i| sample_plan(&mut rng, &seqs[i], &state.params, cfg))
                .collect::<Result<Vec<Plan>>>()?;
            let batch: Vec<(&Sequence, &Plan)> = chunk.iter().map(|&i| &seqs[i]).zip(&plans).collect();
            let g = compute_gradients(&state.params, cfg, &batch, cfg.run.deterministic)?;
            let w = g.n_steps as f64;
            total += g.loss.total * w;
            ce += g.loss.ce * w;
            bpr += g.loss.bpr * w;
            steps += g.n_steps;
            adam_step(&mut state.adam, state.params.as_mut_slice(), &g.grad, &hp, &mask);
        }
        let steps = steps.max(1) as f64;
        let val_mrr = validate(&state.params)?;

        state.epoch = epoch;
        if val_mrr > state.best_mrr {
            state.best_mrr = val_mrr;
            state.best_epoch = epoch;
            state.best = state.params.clone();
            state.since_improvement = 0;
        } else {
            state.since_improvement += 1;
        }
        state.history.push(EpochRecord {
            epoch,
            train_loss: total / steps,
            ce: ce / steps,
            bpr: bpr / steps,
            val_mrr,
        });
        if patience > 0 && state.since_improvement >= patience {
            state.stopped = true;
        }
    }
    Ok(state)
}

/// History as CSV with a header row.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,ce,bpr,val_mrr\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.ce, r.bpr, r.val_mrr
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{split_leave_one_out, synth_generate, SynthConfig};

    fn small() -> (DatasetSplit, RunConfig) {
        let data = synth_generate(&SynthConfig::cycle(6, 12, 12), 3).unwrap();
        let mut cfg = RunConfig::default();
        cfg.model.d_e = 8;
        cfg.model.k = 2;
        cfg.model.d_s = 4;
        cfg.model.d_slot = 2;
        cfg.model.d_dist = 2;
        cfg.model.d_spatial = 3;
        cfg.objective.n_neg = 6;
        cfg.objective.hard_negatives = 2;
        cfg.optim.batch_size = 4;
        cfg.optim.lr = 1e-2;
        cfg.optim.epochs = 6;
        (split_leave_one_out(&data), cfg)
    }

    #[test]
    fn flat_validation_stops_after_eleven_epochs() {
        let (split, mut cfg) = small();
        cfg.optim.epochs = 100;
        let state = TrainState::new(init_params(&cfg, split.catalog.len(), 0), 0);
        let out = train_with(&split, &cfg, state, &mut |_| Ok(0.25)).unwrap();
        assert_eq!(out.history.len(), 11);
        assert!(out.stopped);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn zero_patience_runs_every_epoch() {
        let (split, mut cfg) = small();
        cfg.optim.epochs = 13;
        cfg.optim.patience = 0;
        let state = TrainState::new(init_params(&cfg, split.catalog.len(), 0), 0);
        let out = train_with(&split, &cfg, state, &mut |_| Ok(0.25)).unwrap();
        assert_eq!(out.history.len(), 13);
    }

    #[test]
    fn best_parameters_carry_the_best_recorded_mrr() {
        let (split, mut cfg) = small();
        cfg.optim.patience = 2;
        let mut script = [0.1, 0.3, 0.2, 0.3, 0.25].into_iter();
        let mut snaps = Vec::new();
        let state = TrainState::new(init_params(&cfg, split.catalog.len(), 0), 0);
        let out = train_with(&split, &cfg, state, &mut |p| {
            snaps.push(p.clone());
            Ok(script.next().unwrap())
        })
        .unwrap();
        // the tie at epoch 4 is not an improvement, so 2 flat epochs stop it
        assert_eq!(out.history.len(), 4);
        assert_eq!(out.best_epoch, 2);
        assert_eq!(out.best, snaps[1]);
        assert!(out.history.iter().all(|r| r.val_mrr <= out.best_mrr));
    }

    #[test]
    fn same_seed_same_history() {
        let (split, cfg) = small();
        let a = train(&split, &cfg, 9).unwrap();
        let b = train(&split, &cfg, 9).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        let c = train(&split, &cfg, 10).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn resuming_matches_an_uninterrupted_run() {
        let (split, mut cfg) = small();
        let whole = train(&split, &cfg, 2).unwrap();
        cfg.optim.epochs = 3;
        let first = train(&split, &cfg, 2).unwrap();
        cfg.optim.epochs = 6;
        let resumed = train_from(&split, &cfg, first).unwrap();
        assert_eq!(
            resumed.history.iter().map(|r| r.epoch).collect::<Vec<_>>(),
            vec![1, 2, 3, 4, 5, 6]
        );
        assert_eq!(resumed, whole);
    }

    #[test]
    fn no_trainable_user_is_an_error() {
        let (split, cfg) = small();
        let mut empty = split.clone();
        for u in &mut empty.users {
            u.train = crate::ingest::Trajectory::new(u.user_id, u.train.events[..1].to_vec());
        }
        assert!(matches!(train(&empty, &cfg, 0), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn history_csv_has_a_row_per_epoch() {
        let (split, cfg) = small();
        let s = train(&split, &cfg, 1).unwrap();
        assert_eq!(history_csv(&s.history).lines().count(), 1 + s.history.len());
    }
}
