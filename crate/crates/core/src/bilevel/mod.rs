//! The bi-level training engine: main steps on corrected labels, k-step
//! look-ahead meta-gradients for the correction network, and the baseline
//! trainers that share the same loop.

mod config;
mod meta;
pub mod oracle;
mod step;
mod train;

pub use config::{MetaOptimizerKind, TrainConfig, MAX_LOOKAHEAD};
pub use meta::{
    accumulate_meta_grad, meta_step, LrDiag, MetaGradState, MetaOptimizer, GRAD_NORM_SQ_FLOOR,
};
pub use step::{
    lcn_features, main_step, meta_loss_grad, mixed_hvp_fd, mixed_hvp_fd_with, split_clean_batch,
    training_grad_alpha, training_grad_w, training_loss, training_loss_pinned, Corrector, MainStep,
    TrainBatch,
};
pub use train::{
    accuracy, clean_batches, initial_classifier, initial_lcn, noisy_batches, train_baseline,
    train_mlc, train_mlc_with, EpochRecord, Feed, History, LabelSource, StepRecord, TrainOutcome,
    DIVERGENCE_LOSS,
};
