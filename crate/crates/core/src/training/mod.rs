//! Optimisation: exact batch gradients, Adam, the epoch loop with early
//! stopping, finite-difference verification, and checkpoints.

mod adam;
mod checkpoint;
mod fit;
mod gradcheck;
mod gradients;

pub use adam::{adam_step, decay_mask, AdamHyper, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use fit::{history_csv, train, train_from, train_with, training_sequences, EpochRecord, TrainState};
pub use gradcheck::{
    grad_check, rel_error, GradCheckProblem, GradCheckReport, GradMutation, FULL_CHECK_LIMIT, REL_FLOOR,
};
pub use gradients::{batch_loss, compute_gradients, BatchGradient};
