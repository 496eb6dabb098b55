//! Optimisation: the learning-rate schedule and Adam, reference corruption
//! and the mixed CADec objective, batching, checkpoint averaging and the
//! training loop with its stopping rule.

mod average;
mod batch;
mod mixed;
mod optim;
mod trainer;

pub use average::average_checkpoints;
pub use batch::make_batches;
pub use mixed::{
    cadec_training_loss, choose_first_pass, corrupt_reference, corruption_count, BatchLoss, CadecExample,
    FirstPassSource, MixedObjectiveConfig,
};
pub use optim::{lr_at, Adam, AdamConfig};
pub use trainer::{
    train_base, train_cadec, train_loop, DevMetrics, MetricLog, StepLoss, StopReason, StoppingRule, TrainConfig,
    TrainReport, Trainable,
};
