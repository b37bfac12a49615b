use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the initial hidden state is derived from the category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// Zero state while training, the static initializer at evaluation time.
    None,
    /// `omega * (-1)^c * softmax(r)`, `r ~ U[0,1)^H`. Two categories only.
    Static,
    /// `c * omega_vec + b_vec` with learned vectors, plus `U[0,1)` noise while training.
    Adaptive,
}

impl InitMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "zero" | "nophi" => Some(InitMode::None),
            "static" => Some(InitMode::Static),
            "adaptive" => Some(InitMode::Adaptive),
            _ => None,
        }
    }
}

/// Training or evaluation behaviour of the initializers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub num_categories: usize,
    pub max_len: usize,
    pub init_mode: InitMode,
    pub static_omega: f64,
    /// Restores the conditional prior and its KL penalty.
    pub use_kl_term: bool,
    /// Passes token embeddings and latents through extractors before the recurrence.
    pub use_feature_extractors: bool,
    pub temperature: f64,
    /// Hidden widths of the encoder stack; input is `embed + hidden`.
    pub encoder_widths: Vec<usize>,
    /// Hidden widths of the decoder stack; input is `latent + hidden`.
    pub decoder_widths: Vec<usize>,
    pub prior_width: usize,
    /// When false the classifier head is trained on a detached final state
    /// (the single-task VRNN variants).
    pub multitask: bool,
    /// Drop PAD targets after the terminating one from the generation loss.
    pub mask_padding: bool,
    pub adaptive_train_noise: bool,
    pub sigma_floor: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2,
            embed_dim: 300,
            hidden_dim: 256,
            latent_dim: 128,
            num_categories: 2,
            max_len: 30,
            init_mode: InitMode::Static,
            static_omega: 8.5,
            use_kl_term: false,
            use_feature_extractors: false,
            temperature: 1.0,
            encoder_widths: vec![512, 256],
            decoder_widths: vec![256, 300],
            prior_width: 256,
            multitask: true,
            mask_padding: false,
            adaptive_train_noise: true,
            sigma_floor: 1e-6,
        }
    }
}

impl ModelConfig {
    pub fn new(vocab_size: usize, num_categories: usize) -> Self {
        Self { vocab_size, num_categories, ..Self::default() }
    }

    /// A small configuration for tests and quick experiments.
    pub fn tiny(vocab_size: usize, num_categories: usize) -> Self {
        Self {
            vocab_size,
            num_categories,
            embed_dim: 8,
            hidden_dim: 6,
            latent_dim: 4,
            max_len: 5,
            encoder_widths: vec![10, 8],
            decoder_widths: vec![8, 7],
            prior_width: 6,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("latent_dim", self.latent_dim),
            ("num_categories", self.num_categories),
            ("max_len", self.max_len),
            ("prior_width", self.prior_width),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocabulary must include PAD and UNK".into()));
        }
        if self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return Err(Error::Config("encoder and decoder need at least one layer".into()));
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return Err(Error::Config("layer widths must be at least 1".into()));
        }
        if !self.static_omega.is_finite() {
            return Err(Error::Config("static_omega must be finite".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if !(self.sigma_floor >= 0.0) {
            return Err(Error::Config("sigma_floor must be non-negative".into()));
        }
        Ok(())
    }

    /// Initializer used in a given phase.
    pub fn init_for(&self, phase: Phase) -> InitMode {
        match (self.init_mode, phase) {
            (InitMode::None, Phase::Eval) => InitMode::Static,
            (m, _) => m,
        }
    }
}
