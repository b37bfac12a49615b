use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::PAD;
use crate::error::{Error, Result};
use crate::model::config::{InitMode, ModelConfig, Phase};
use crate::model::init::{init_hidden_static, HiddenState};
use crate::nn::{
    gru_cell, kl_gaussians_var, log_softmax, reparameterize, softmax, Activation, GaussianParams, GaussianVars,
    uniform_tensor, GruWeights, Linear, Mlp,
};
use crate::rng::{Rng, Stream};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
struct PriorNet {
    hidden: Linear,
    mu: Linear,
    sigma: Linear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layers {
    embedding: ParamId,
    encoder: Mlp,
    mu_head: Linear,
    sigma_head: Linear,
    decoder: Mlp,
    output: Linear,
    gru: GruWeights,
    classifier: Linear,
    adaptive: Option<(ParamId, ParamId)>,
    prior: Option<PriorNet>,
    feat_x: Option<Linear>,
    feat_z: Option<Linear>,
}

/// Tape handles produced by one cell step over a batch (one row per sequence).
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    pub h_next: Var,
    pub logits: Var,
    pub posterior: GaussianVars,
    pub z: Var,
    /// Per-row KL column, present iff the KL term is enabled.
    pub kl: Option<Var>,
}

/// Tape handles for a teacher-forced pass over a batch.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub step_logits: Vec<Var>,
    pub class_logits: Var,
    pub kl: Vec<Var>,
    pub final_hidden: Var,
}

/// Values produced by a single cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub h_next: HiddenState,
    pub logits: Vec<f64>,
    pub z: Vec<f64>,
    pub posterior: GaussianParams,
    pub kl: Option<f64>,
}

/// Values produced by a teacher-forced pass over one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceForward {
    /// `T` rows of vocabulary logits; row `t` predicts target `t`.
    pub step_logits: Vec<Vec<f64>>,
    pub class_log_probs: Vec<f64>,
    pub kl_sum: Option<f64>,
    pub final_hidden: HiddenState,
}

/// Batch objective: `total` is the mean of the per-sentence joint losses.
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub total: Var,
    pub gen_nll: Vec<f64>,
    pub cls_nll: Vec<f64>,
    pub kl: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub gen_nll: f64,
    pub cls_nll: f64,
    pub kl: f64,
    pub total: f64,
}

/// Generation weights over a sequence's targets: every position, or with
/// `mask_padding` only the real tokens plus the first PAD.
pub fn target_weights(targets: &[usize], mask_padding: bool) -> Vec<f64> {
    if !mask_padding {
        return vec![1.0; targets.len()];
    }
    let end = targets.iter().position(|&t| t == PAD).map_or(targets.len(), |p| p + 1);
    (0..targets.len()).map(|t| if t < end { 1.0 } else { 0.0 }).collect()
}

/// The joint objective for one sequence:
/// `sum_t CE(logits_t, target_t) - log p(c | h_T)` (+ KL when enabled).
pub fn joint_loss(fwd: &SequenceForward, targets: &[usize], category: usize, cfg: &ModelConfig) -> Result<LossBreakdown> {
    if targets.len() != fwd.step_logits.len() {
        return Err(Error::shape(
            "joint_loss",
            format!("{} targets for {} steps", targets.len(), fwd.step_logits.len()),
        ));
    }
    if category >= fwd.class_log_probs.len() {
        return Err(Error::OutOfRange { what: "categories", index: category, size: fwd.class_log_probs.len() });
    }
    let weights = target_weights(targets, cfg.mask_padding);
    let mut gen_nll = 0.0;
    for ((logits, &t), w) in fwd.step_logits.iter().zip(targets).zip(weights) {
        gen_nll += w * crate::nn::cross_entropy_from_logits(logits, t)?;
    }
    let cls_nll = -fwd.class_log_probs[category];
    let kl = if cfg.use_kl_term { fwd.kl_sum.unwrap_or(0.0) } else { 0.0 };
    Ok(LossBreakdown { gen_nll, cls_nll, kl, total: gen_nll + cls_nll + kl })
}

/// The category-aware variational recurrent network.
#[derive(Debug, Clone, PartialEq)]
pub struct CatVrnn {
    config: ModelConfig,
    params: ParamStore,
    layers: Layers,
}

impl CatVrnn {
    /// Builds a freshly initialized model. Weights are a deterministic
    /// function of `(config, seed)`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layers = Self::build(&config, &mut params, &mut rng)?;
        Ok(Self { config, params, layers })
    }

    /// Rebuilds a model from a config and stored parameters. Names and
    /// shapes must match what the config implies.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let skeleton = Self::new(config, 0)?;
        if skeleton.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "config implies {} parameter tensors, found {}",
                skeleton.params.len(),
                params.len()
            )));
        }
        for ((_, a, ta), (_, b, tb)) in skeleton.params.iter().zip(params.iter()) {
            if a != b || ta.shape() != tb.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: expected `{a}` {:?}, found `{b}` {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(Self { config: skeleton.config, params, layers: skeleton.layers })
    }

    /// Same architecture with a different parameter set of identical layout.
    pub fn with_params(&self, params: ParamStore) -> Result<Self> {
        let same = params.len() == self.params.len()
            && params.iter().zip(self.params.iter()).all(|((_, a, ta), (_, b, tb))| a == b && ta.shape() == tb.shape());
        if !same {
            return Err(Error::Invariant("parameter layout differs from the model".into()));
        }
        Ok(Self { config: self.config.clone(), params, layers: self.layers.clone() })
    }

    fn build(cfg: &ModelConfig, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Result<Layers> {
        let (e, h, l, v) = (cfg.embed_dim, cfg.hidden_dim, cfg.latent_dim, cfg.vocab_size);
        let embedding = {
            use rand_distr::{Distribution, StandardNormal};
            let data = (0..v * e).map(|_| StandardNormal.sample(rng)).collect();
            store.insert("embedding", Tensor::new(vec![v, e], data)?)?
        };
        let enc_dims: Vec<usize> = std::iter::once(e + h).chain(cfg.encoder_widths.iter().copied()).collect();
        let encoder = Mlp::new(store, "encoder", &enc_dims, Activation::Relu, rng)?;
        let enc_out = encoder.out_dim();
        let mu_head = Linear::new(store, "mu_head", enc_out, l, rng)?;
        let sigma_head = Linear::new(store, "sigma_head", enc_out, l, rng)?;
        let dec_dims: Vec<usize> = std::iter::once(l + h).chain(cfg.decoder_widths.iter().copied()).collect();
        let decoder = Mlp::new(store, "decoder", &dec_dims, Activation::Relu, rng)?;
        let output = Linear::new(store, "output", decoder.out_dim(), v, rng)?;
        let (feat_x, feat_z) = if cfg.use_feature_extractors {
            (Some(Linear::new(store, "feat_x", e, e, rng)?), Some(Linear::new(store, "feat_z", l, l, rng)?))
        } else {
            (None, None)
        };
        let gru = GruWeights::new(store, "gru", e + l, h, rng)?;
        let classifier = Linear::new(store, "classifier", h, cfg.num_categories, rng)?;
        let adaptive = if cfg.init_mode == InitMode::Adaptive {
            // A 1 -> H linear layer over the category index, with the usual U(-1, 1) start.
            let omega = store.insert("init.omega", uniform_tensor(vec![h], 1.0, rng))?;
            let bias = store.insert("init.bias", uniform_tensor(vec![h], 1.0, rng))?;
            Some((omega, bias))
        } else {
            None
        };
        let prior = if cfg.use_kl_term {
            Some(PriorNet {
                hidden: Linear::new(store, "prior.hidden", h, cfg.prior_width, rng)?,
                mu: Linear::new(store, "prior.mu", cfg.prior_width, l, rng)?,
                sigma: Linear::new(store, "prior.sigma", cfg.prior_width, l, rng)?,
            })
        } else {
            None
        };
        Ok(Layers {
            embedding,
            encoder,
            mu_head,
            sigma_head,
            decoder,
            output,
            gru,
            classifier,
            adaptive,
            prior,
            feat_x,
            feat_z,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Number of scalar learnables.
    pub fn parameter_count(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn set_temperature(&mut self, t: f64) -> Result<()> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        self.config.temperature = t;
        Ok(())
    }

    fn check_category(&self, c: usize) -> Result<()> {
        if c >= self.config.num_categories {
            return Err(Error::UnsupportedCategory {
                category: c,
                reason: format!("model has {} categories", self.config.num_categories),
            });
        }
        Ok(())
    }

    /// Initial hidden states for a batch, one row per category.
    pub fn initial_state_var(&self, tape: &mut Tape, categories: &[usize], phase: Phase, rng: &mut Rng) -> Result<Var> {
        let h = self.config.hidden_dim;
        let b = categories.len();
        for &c in categories {
            self.check_category(c)?;
        }
        match self.config.init_for(phase) {
            InitMode::None => tape.constant(b, h, vec![0.0; b * h]),
            InitMode::Static => {
                let mut data = Vec::with_capacity(b * h);
                for &c in categories {
                    data.extend(init_hidden_static(c, self.config.static_omega, h, rng)?.h);
                }
                tape.constant(b, h, data)
            }
            InitMode::Adaptive => {
                let (omega, bias) = self.layers.adaptive.ok_or_else(|| Error::Config("adaptive init parameters missing".into()))?;
                let cats = tape.constant(b, 1, categories.iter().map(|&c| c as f64).collect())?;
                let w = tape.param(&self.params, omega);
                let bv = tape.param(&self.params, bias);
                let cw = tape.matmul(cats, w)?;
                let state = tape.add_bias(cw, bv)?;
                if phase == Phase::Train && self.config.adaptive_train_noise {
                    let noise = tape.constant(b, h, rng.uniform(Stream::Noise, b * h))?;
                    tape.add(state, noise)
                } else {
                    Ok(state)
                }
            }
        }
    }

    fn gaussian_head(&self, tape: &mut Tape, x: Var, mu: &Linear, sigma: &Linear) -> Result<GaussianVars> {
        let m = mu.forward(tape, &self.params, x)?;
        let s = sigma.forward(tape, &self.params, x)?;
        let s = tape.softplus(s);
        let s = tape.affine(s, 1.0, self.config.sigma_floor);
        Ok(GaussianVars { mu: m, sigma: s })
    }

    /// One cell step over a batch: encode `x ⊕ h_prev` into a posterior,
    /// sample `z`, decode `z ⊕ h_prev` into vocabulary logits and advance the
    /// GRU on `x ⊕ z`.
    pub fn step_var(&self, tape: &mut Tape, h_prev: Var, x_ids: &[usize], rng: &mut Rng) -> Result<StepVars> {
        let l = &self.layers;
        let p = &self.params;
        if let Some(&bad) = x_ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::OutOfRange { what: "vocabulary", index: bad, size: self.config.vocab_size });
        }
        let table = tape.param(p, l.embedding);
        let x = tape.gather(table, x_ids)?;
        let enc_in = tape.concat(&[x, h_prev])?;
        let enc = l.encoder.forward(tape, p, enc_in)?;
        let posterior = self.gaussian_head(tape, enc, &l.mu_head, &l.sigma_head)?;
        let z = reparameterize(tape, posterior, rng)?;
        let dec_in = tape.concat(&[z, h_prev])?;
        let dec = l.decoder.forward(tape, p, dec_in)?;
        let logits = l.output.forward(tape, p, dec)?;
        let (xr, zr) = match (&l.feat_x, &l.feat_z) {
            (Some(fx), Some(fz)) => {
                let a = fx.forward(tape, p, x)?;
                let b = fz.forward(tape, p, z)?;
                (tape.relu(a), tape.relu(b))
            }
            _ => (x, z),
        };
        let rnn_in = tape.concat(&[xr, zr])?;
        let h_next = gru_cell(tape, p, rnn_in, h_prev, &l.gru)?;
        let kl = match &l.prior {
            Some(prior) => {
                let hid = prior.hidden.forward(tape, p, h_prev)?;
                let hid = tape.relu(hid);
                let prior_g = self.gaussian_head(tape, hid, &prior.mu, &prior.sigma)?;
                Some(kl_gaussians_var(tape, posterior, prior_g)?)
            }
            None => None,
        };
        Ok(StepVars { h_next, logits, posterior, z, kl })
    }

    /// Classifier logits on a batch of final states. The single-task variant
    /// detaches the state so the head does not shape the shared layers.
    pub fn class_logits_var(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let input = if self.config.multitask { h } else { tape.detach(h) };
        self.layers.classifier.forward(tape, &self.params, input)
    }

    fn check_inputs(&self, inputs: &[Vec<usize>], categories: &[usize]) -> Result<()> {
        if inputs.is_empty() {
            return Err(Error::Empty("no sequences in batch"));
        }
        if inputs.len() != categories.len() {
            return Err(Error::shape("forward", format!("{} sequences, {} categories", inputs.len(), categories.len())));
        }
        let t = self.config.max_len;
        for row in inputs {
            if row.len() != t {
                return Err(Error::Data(format!("sequence length {} differs from T = {t}", row.len())));
            }
            if row[0] != PAD {
                return Err(Error::Data("sequence must start with the PAD start token".into()));
            }
        }
        Ok(())
    }

    /// Teacher-forced pass over a batch of padded input rows.
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        inputs: &[Vec<usize>],
        categories: &[usize],
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<BatchForward> {
        self.check_inputs(inputs, categories)?;
        let mut h = self.initial_state_var(tape, categories, phase, rng)?;
        let mut step_logits = Vec::with_capacity(self.config.max_len);
        let mut kl = Vec::new();
        let mut ids = vec![0; inputs.len()];
        for t in 0..self.config.max_len {
            for (slot, row) in ids.iter_mut().zip(inputs) {
                *slot = row[t];
            }
            let s = self.step_var(tape, h, &ids, rng)?;
            step_logits.push(s.logits);
            kl.extend(s.kl);
            h = s.h_next;
        }
        let class_logits = self.class_logits_var(tape, h)?;
        Ok(BatchForward { step_logits, class_logits, kl, final_hidden: h })
    }

    /// Records the joint objective of a teacher-forced batch on `tape`.
    pub fn batch_loss(
        &self,
        tape: &mut Tape,
        inputs: &[Vec<usize>],
        targets: &[Vec<usize>],
        categories: &[usize],
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<BatchLoss> {
        if targets.len() != inputs.len() || targets.iter().any(|t| t.len() != self.config.max_len) {
            return Err(Error::shape("batch_loss", "targets must match inputs, each of length T".to_string()));
        }
        let fwd = self.forward_batch(tape, inputs, categories, phase, rng)?;
        let b = inputs.len();
        let scale = 1.0 / b as f64;
        let weights: Vec<Vec<f64>> = targets.iter().map(|t| target_weights(t, self.config.mask_padding)).collect();
        let mut gen_nll = vec![0.0; b];
        let mut terms = Vec::with_capacity(self.config.max_len + 1 + fwd.kl.len());
        let mut column = vec![0; b];
        for (t, &logits) in fwd.step_logits.iter().enumerate() {
            for (slot, row) in column.iter_mut().zip(targets) {
                *slot = row[t];
            }
            let ce = tape.cross_entropy(logits, &column)?;
            let w: Vec<f64> = weights.iter().map(|w| w[t]).collect();
            for (i, (g, v)) in gen_nll.iter_mut().zip(tape.value(ce)).enumerate() {
                *g += w[i] * v;
            }
            let scaled: Vec<f64> = w.iter().map(|w| w * scale).collect();
            terms.push(tape.weighted_sum(ce, &scaled)?);
        }
        let cls = tape.cross_entropy(fwd.class_logits, categories)?;
        let cls_nll = tape.value(cls).to_vec();
        terms.push(tape.weighted_sum(cls, &vec![scale; b])?);
        let mut kl = vec![0.0; b];
        for &k in &fwd.kl {
            for (acc, v) in kl.iter_mut().zip(tape.value(k)) {
                *acc += v;
            }
            terms.push(tape.weighted_sum(k, &vec![scale; b])?);
        }
        let mut total = terms[0];
        for &term in &terms[1..] {
            total = tape.add(total, term)?;
        }
        Ok(BatchLoss { total, gen_nll, cls_nll, kl })
    }

    /// Single-sequence initial state (value form).
    pub fn initial_hidden(&self, category: usize, phase: Phase, rng: &mut Rng) -> Result<HiddenState> {
        let mut tape = Tape::new();
        let h = self.initial_state_var(&mut tape, &[category], phase, rng)?;
        Ok(HiddenState { h: tape.value(h).to_vec() })
    }

    /// One step of the cell on a single sequence.
    pub fn cell_step(&self, h_prev: &HiddenState, x_id: usize, rng: &mut Rng) -> Result<StepOutput> {
        if h_prev.dim() != self.config.hidden_dim {
            return Err(Error::shape("cell_step", format!("hidden {} vs {}", h_prev.dim(), self.config.hidden_dim)));
        }
        let mut tape = Tape::new();
        let h = tape.constant(1, h_prev.dim(), h_prev.h.clone())?;
        let s = self.step_var(&mut tape, h, &[x_id], rng)?;
        Ok(StepOutput {
            h_next: HiddenState { h: tape.value(s.h_next).to_vec() },
            logits: tape.value(s.logits).to_vec(),
            z: tape.value(s.z).to_vec(),
            posterior: s.posterior.row(&tape, 0),
            kl: s.kl.map(|k| tape.scalar(k)),
        })
    }

    /// Log class probabilities from a final hidden state.
    pub fn classify(&self, h: &HiddenState) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let hv = tape.constant(1, h.dim(), h.h.clone())?;
        let logits = self.layers.classifier.forward(&mut tape, &self.params, hv)?;
        Ok(log_softmax(tape.value(logits)))
    }

    /// Teacher-forced pass over one padded sequence (`x_ids[0]` is PAD).
    pub fn forward_teacher(&self, x_ids: &[usize], category: usize, phase: Phase, rng: &mut Rng) -> Result<SequenceForward> {
        let mut tape = Tape::new();
        let fwd = self.forward_batch(&mut tape, &[x_ids.to_vec()], &[category], phase, rng)?;
        let kl_sum = if fwd.kl.is_empty() { None } else { Some(fwd.kl.iter().map(|k| tape.scalar(*k)).sum()) };
        Ok(SequenceForward {
            step_logits: fwd.step_logits.iter().map(|v| tape.value(*v).to_vec()).collect(),
            class_log_probs: log_softmax(tape.value(fwd.class_logits)),
            kl_sum,
            final_hidden: HiddenState { h: tape.value(fwd.final_hidden).to_vec() },
        })
    }

    /// Samples `count` sequences of category `category`, feeding each sampled
    /// token back as the next input and stopping a sequence at its first PAD.
    pub fn generate(&self, category: usize, count: usize, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
        self.generate_mixed(&vec![category; count], rng)
    }

    /// Like [`CatVrnn::generate`] with one requested category per sample.
    pub fn generate_mixed(&self, categories: &[usize], rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
        const CHUNK: usize = 256;
        let mut out = Vec::with_capacity(categories.len());
        for chunk in categories.chunks(CHUNK) {
            out.extend(self.generate_chunk(chunk, rng)?);
        }
        Ok(out)
    }

    fn generate_chunk(&self, categories: &[usize], rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
        let b = categories.len();
        let hd = self.config.hidden_dim;
        let inv_temp = 1.0 / self.config.temperature;
        let mut tape = Tape::new();
        let h0 = self.initial_state_var(&mut tape, categories, Phase::Eval, rng)?;
        let mut h = tape.value(h0).to_vec();
        let mut x = vec![PAD; b];
        let mut seqs = vec![Vec::new(); b];
        let mut done = vec![false; b];
        for _ in 0..self.config.max_len {
            if done.iter().all(|d| *d) {
                break;
            }
            let mut tape = Tape::new();
            let hv = tape.constant(b, hd, h)?;
            let s = self.step_var(&mut tape, hv, &x, rng)?;
            for i in 0..b {
                let scaled: Vec<f64> = tape.row(s.logits, i).iter().map(|l| l * inv_temp).collect();
                let y = rng.categorical(Stream::Sampling, &softmax(&scaled));
                if done[i] {
                    x[i] = PAD;
                    continue;
                }
                if y == PAD {
                    done[i] = true;
                } else {
                    seqs[i].push(y);
                }
                x[i] = y;
            }
            h = tape.value(s.h_next).to_vec();
        }
        Ok(seqs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::pad_sequence;

    fn tiny(init: InitMode) -> CatVrnn {
        let cfg = ModelConfig { init_mode: init, ..ModelConfig::tiny(12, 3) };
        CatVrnn::new(cfg, 11).unwrap()
    }

    fn seq(model: &CatVrnn, ids: &[usize]) -> (Vec<usize>, Vec<usize>) {
        pad_sequence(ids, model.config().max_len).unwrap()
    }

    #[test]
    fn step_shapes() {
        let m = tiny(InitMode::Adaptive);
        let h = m.initial_hidden(2, Phase::Eval, &mut Rng::new(0)).unwrap();
        let out = m.cell_step(&h, 5, &mut Rng::new(0)).unwrap();
        assert_eq!(out.logits.len(), 12);
        assert_eq!(out.h_next.dim(), 6);
        assert!(out.kl.is_none());
        assert!(m.cell_step(&h, 12, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn step_is_deterministic() {
        let m = tiny(InitMode::Adaptive);
        let h = HiddenState { h: vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.6] };
        let a = m.cell_step(&h, 3, &mut Rng::new(4)).unwrap();
        let b = m.cell_step(&h, 3, &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn teacher_forward_is_fold_of_steps() {
        let m = tiny(InitMode::Adaptive);
        let (inp, _) = seq(&m, &[4, 7, 2]);
        let full = m.forward_teacher(&inp, 1, Phase::Train, &mut Rng::new(9)).unwrap();

        let mut rng = Rng::new(9);
        let mut h = m.initial_hidden(1, Phase::Train, &mut rng).unwrap();
        let mut logits = Vec::new();
        for &x in &inp {
            let s = m.cell_step(&h, x, &mut rng).unwrap();
            logits.push(s.logits);
            h = s.h_next;
        }
        assert_eq!(full.step_logits, logits);
        assert_eq!(full.final_hidden, h);
        assert_eq!(full.class_log_probs, m.classify(&h).unwrap());
    }

    #[test]
    fn forward_shapes_and_normalization() {
        let m = tiny(InitMode::Adaptive);
        let (inp, _) = seq(&m, &[3, 3]);
        let f = m.forward_teacher(&inp, 0, Phase::Eval, &mut Rng::new(0)).unwrap();
        assert_eq!(f.step_logits.len(), 5);
        assert!(f.step_logits.iter().all(|l| l.len() == 12));
        assert_eq!(f.class_log_probs.len(), 3);
        let lse = crate::autodiff::log_sum_exp(&f.class_log_probs);
        assert!(lse.abs() < 1e-10);
    }

    #[test]
    fn all_pad_input_is_finite() {
        let m = tiny(InitMode::Adaptive);
        let f = m.forward_teacher(&[PAD; 5], 2, Phase::Train, &mut Rng::new(1)).unwrap();
        assert!(f.step_logits.iter().flatten().all(|v| v.is_finite()));
        assert!(f.final_hidden.is_finite());
    }

    #[test]
    fn forward_rejects_bad_sequences() {
        let m = tiny(InitMode::Adaptive);
        let mut rng = Rng::new(0);
        assert!(m.forward_teacher(&[PAD; 4], 0, Phase::Eval, &mut rng).is_err());
        assert!(m.forward_teacher(&[3, 0, 0, 0, 0], 0, Phase::Eval, &mut rng).is_err());
        assert!(m.forward_teacher(&[PAD; 5], 3, Phase::Eval, &mut rng).is_err());
    }

    #[test]
    fn static_model_rejects_third_category() {
        let m = tiny(InitMode::Static);
        let err = m.initial_hidden(2, Phase::Eval, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedCategory { .. }));
    }

    #[test]
    fn kl_only_when_enabled() {
        let cfg = ModelConfig { use_kl_term: true, ..ModelConfig::tiny(12, 2) };
        let m = CatVrnn::new(cfg, 0).unwrap();
        let (inp, _) = seq(&m, &[2, 3]);
        let f = m.forward_teacher(&inp, 1, Phase::Train, &mut Rng::new(0)).unwrap();
        assert!(f.kl_sum.unwrap() >= 0.0);
        assert!(m.params().iter().any(|(_, n, _)| n.starts_with("prior.")));
        assert!(!tiny(InitMode::Static).params().iter().any(|(_, n, _)| n.starts_with("prior.")));
    }

    #[test]
    fn joint_loss_uniform_case() {
        let cfg = ModelConfig::tiny(12, 3);
        let fwd = SequenceForward {
            step_logits: vec![vec![0.0; 12]; 5],
            class_log_probs: vec![-(3f64).ln(); 3],
            kl_sum: None,
            final_hidden: HiddenState::zeros(6),
        };
        let l = joint_loss(&fwd, &[2, 3, 0, 0, 0], 1, &cfg).unwrap();
        assert!((l.gen_nll - 5.0 * (12f64).ln()).abs() < 1e-12);
        assert!((l.cls_nll - (3f64).ln()).abs() < 1e-12);
        assert!((l.total - l.gen_nll - l.cls_nll).abs() < 1e-12);
        assert!(joint_loss(&fwd, &[2, 3], 1, &cfg).is_err());
    }

    #[test]
    fn joint_loss_perfect_prediction() {
        let cfg = ModelConfig::tiny(12, 2);
        let targets = [4usize, 5, 0, 0, 0];
        let step_logits = targets
            .iter()
            .map(|&t| (0..12).map(|i| if i == t { 1000.0 } else { -1000.0 }).collect())
            .collect();
        let fwd = SequenceForward {
            step_logits,
            class_log_probs: vec![0.0, -2000.0],
            kl_sum: None,
            final_hidden: HiddenState::zeros(6),
        };
        assert!(joint_loss(&fwd, &targets, 0, &cfg).unwrap().total < 1e-12);
    }

    #[test]
    fn masking_keeps_first_pad() {
        assert_eq!(target_weights(&[4, 5, 0, 0], true), vec![1.0, 1.0, 1.0, 0.0]);
        assert_eq!(target_weights(&[4, 5, 6], true), vec![1.0; 3]);
        assert_eq!(target_weights(&[4, 0, 0], false), vec![1.0; 3]);
    }

    #[test]
    fn generation_ranges_and_determinism() {
        let m = tiny(InitMode::Adaptive);
        let a = m.generate(1, 20, &mut Rng::new(3)).unwrap();
        let b = m.generate(1, 20, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        for s in &a {
            assert!(s.len() <= 5);
            assert!(s.iter().all(|&t| t < 12 && t != PAD));
        }
    }

    #[test]
    fn from_parts_validates_layout() {
        let m = tiny(InitMode::Adaptive);
        let back = CatVrnn::from_parts(m.config().clone(), m.params().clone()).unwrap();
        assert_eq!(back, m);
        let other = ModelConfig { init_mode: InitMode::Static, ..m.config().clone() };
        assert!(CatVrnn::from_parts(other, m.params().clone()).is_err());
    }

    fn grad_check_model(init: InitMode, kl: bool) -> crate::gradcheck::GradCheckReport {
        let cfg = ModelConfig { init_mode: init, use_kl_term: kl, ..ModelConfig::tiny(12, 2) };
        let mut m = CatVrnn::new(cfg, 5).unwrap();
        if init == InitMode::Adaptive {
            for name in ["init.omega", "init.bias"] {
                let t = m.params_mut().by_name_mut(name).unwrap();
                for (i, v) in t.data_mut().iter_mut().enumerate() {
                    *v = 0.1 * (i as f64 - 2.5);
                }
            }
        }
        let (i0, t0) = seq(&m, &[3, 7, 4]);
        let (i1, t1) = seq(&m, &[9, 2, 11, 5]);
        let (inputs, targets, cats) = (vec![i0, i1], vec![t0, t1], vec![0, 1]);
        let layout = m.clone();
        crate::gradcheck::check_gradient(
            m.params_mut(),
            |tape, store| {
                let model = CatVrnn { params: store.clone(), ..layout.clone() };
                let loss = model.batch_loss(tape, &inputs, &targets, &cats, Phase::Train, &mut Rng::new(2))?;
                Ok(loss.total)
            },
            &crate::gradcheck::GradCheckOptions::default(),
        )
        .unwrap()
    }

    #[test]
    fn full_loss_gradients() {
        for init in [InitMode::Static, InitMode::Adaptive] {
            for kl in [false, true] {
                let r = grad_check_model(init, kl);
                assert!(r.passed, "{init:?} kl={kl}: {:?}", r.worst);
            }
        }
    }

    #[test]
    fn batch_loss_matches_joint_loss() {
        let cfg = ModelConfig { use_kl_term: true, ..ModelConfig::tiny(12, 2) };
        let m = CatVrnn::new(cfg, 3).unwrap();
        let (inp, tgt) = seq(&m, &[5, 6, 7]);
        let mut tape = Tape::new();
        let loss = m
            .batch_loss(&mut tape, &[inp.clone()], &[tgt.clone()], &[1], Phase::Train, &mut Rng::new(8))
            .unwrap();
        let fwd = m.forward_teacher(&inp, 1, Phase::Train, &mut Rng::new(8)).unwrap();
        let l = joint_loss(&fwd, &tgt, 1, m.config()).unwrap();
        assert!((tape.scalar(loss.total) - l.total).abs() < 1e-10);
        assert!((loss.gen_nll[0] - l.gen_nll).abs() < 1e-10);
        assert!((loss.kl[0] - l.kl).abs() < 1e-10);
    }

    #[test]
    fn parameter_count_category_delta() {
        let a = CatVrnn::new(ModelConfig::tiny(12, 2), 0).unwrap();
        let b = CatVrnn::new(ModelConfig::tiny(12, 5), 0).unwrap();
        assert_eq!(b.parameter_count() - a.parameter_count(), (6 + 1) * 3);
    }
}
