//! Mini-batch training with validation-based model selection.

mod optim;
mod trainer;

pub use optim::{adam_step, clip_grad_norm, sgd_step, AdamParams, AdamState, SgdState};
pub use trainer::{
    evaluate_mae, predict, train, train_from, EpochRecord, LossKind, OptimizerKind, TrainConfig, TrainReport,
};
