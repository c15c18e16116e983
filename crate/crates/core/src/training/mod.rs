//! The joint objective, minibatching and the training loop.

mod batches;
mod loss;
mod trainer;

pub use batches::length_grouped_batches;
pub use loss::{joint_loss, joint_loss_nodes, joint_loss_terms, LossBreakdown, LossNodes, Terms};
pub use trainer::{
    loss_log_tsv, teacher_forced_accuracy, train, LogRow, TrainHooks, TrainOutcome, TrainingConfig,
    LOSS_LOG_HEADER,
};
