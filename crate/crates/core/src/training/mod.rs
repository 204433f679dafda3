//! Losses, AdamW with a warmup/cosine schedule, input-noise injection,
//! synthetic tasks and the training loop.

mod loss;
mod noise;
mod optim;
pub mod task;
mod trainer;

pub use loss::{argmax, cross_entropy_loss, mse_loss, EnergyHead};
pub use noise::add_gaussian_noise;
pub use optim::{adamw_step, LrSchedule, OptimState, TrainConfig};
pub use task::{gen_task, Dataset, Sample, Target, TaskKind, TaskSpec};
pub use trainer::{
    param_count_for, train_adapter, train_on, EvalPoint, Model, RunMetrics, TrainOutcome,
};
