//! Maximum-likelihood training with Adam, deterministic shuffling and
//! resumable checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod trainer;

pub use adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use trainer::{append_stats, EpochStats, TrainPlan, Trainer};
