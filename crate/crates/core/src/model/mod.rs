//! The category-aware variational recurrent network.

pub mod config;
pub mod init;
pub mod network;

pub use config::{InitMode, ModelConfig, Phase};
pub use init::{init_hidden_adaptive, init_hidden_static, init_hidden_zero, static_state_from_draw, HiddenState};
pub use network::{joint_loss, target_weights, BatchForward, BatchLoss, CatVrnn, LossBreakdown, SequenceForward, StepOutput, StepVars};
