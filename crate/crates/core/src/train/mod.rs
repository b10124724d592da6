//! SSIM objective, ADAM, step schedule, training loop and evaluation.

mod adam;
mod config;
mod eval;
mod sampling;
mod trainer;

pub use adam::{adam_step, OptimizerState};
pub use config::{lr_at, AdamConfig, TrainConfig};
pub use eval::{evaluate, EvalReport, EvalRow};
pub use sampling::{crop_origin, exemplar_index, sample_exemplar, ssim_loss};
pub use trainer::{
    plan_epoch, train, EpochRecord, Observer, Progress, Quiet, RunDirectory, SamplePlan, StepRecord, TrainReport,
    Trainer,
};
