use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{Batch, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{CatVrnn, Phase};
use crate::rng::Rng;
use crate::training::adam::{adam_step, clip_grad_norm, AdamConfig, AdamState};
use crate::training::checkpoint::Checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the model-side random streams and the per-epoch shuffles.
    pub seed: u64,
    pub adam: AdamConfig,
    /// Optional global gradient-norm bound.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self { epochs: 250, batch_size: 64, seed: 0, adam: AdamConfig::default(), max_grad_norm: None }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if matches!(self.max_grad_norm, Some(n) if !(n > 0.0)) {
            return Err(Error::Config("max_grad_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Exact per-sentence means over one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub sentences: usize,
    pub gen_nll: f64,
    pub cls_nll: f64,
    pub kl: f64,
    /// Smallest batch-mean KL over the epoch's optimizer steps.
    pub min_step_kl: f64,
    pub total: f64,
}

pub struct Trainer {
    model: CatVrnn,
    adam: AdamState,
    rng: Rng,
    plan: TrainPlan,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: CatVrnn, plan: TrainPlan) -> Result<Self> {
        plan.validate()?;
        let adam = AdamState::new(plan.adam, model.params());
        let rng = Rng::new(plan.seed);
        Ok(Self { model, adam, rng, plan, epoch: 0 })
    }

    /// Continues from a checkpoint that carries optimizer state.
    pub fn from_checkpoint(ckpt: &Checkpoint, plan: TrainPlan) -> Result<Self> {
        plan.validate()?;
        let model = CatVrnn::from_parts(ckpt.config.clone(), ckpt.params.clone())?;
        let adam = ckpt.adam.clone().ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state".into()))?;
        adam.validate(model.params())?;
        let rng = Rng::from_state(&ckpt.rng)?;
        Ok(Self { model, adam, rng, plan, epoch: ckpt.epoch })
    }

    pub fn model(&self) -> &CatVrnn {
        &self.model
    }

    pub fn into_model(self) -> CatVrnn {
        self.model
    }

    pub fn adam_mut(&mut self) -> &mut AdamState {
        &mut self.adam
    }

    pub fn plan(&self) -> &TrainPlan {
        &self.plan
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Presentation order for an epoch; a function of `(seed, epoch)` only.
    pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// One pass over `data` in minibatches; each update minimizes the mean
    /// per-sentence joint loss.
    pub fn train_epoch(&mut self, data: &Batch) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(Error::Empty("training corpus"));
        }
        let order = Self::epoch_order(self.plan.seed, self.epoch, data.len());
        let (mut gen, mut cls, mut kl) = (0.0, 0.0, 0.0);
        let mut min_step_kl = f64::INFINITY;
        for chunk in order.chunks(self.plan.batch_size) {
            let inputs: Vec<Vec<usize>> = chunk.iter().map(|&i| data.inputs[i].clone()).collect();
            let targets: Vec<Vec<usize>> = chunk.iter().map(|&i| data.targets[i].clone()).collect();
            let cats: Vec<usize> = chunk.iter().map(|&i| data.categories[i]).collect();
            let mut tape = Tape::new();
            let loss = self.model.batch_loss(&mut tape, &inputs, &targets, &cats, Phase::Train, &mut self.rng)?;
            let value = tape.scalar(loss.total);
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("loss {value} at epoch {}", self.epoch + 1)));
            }
            gen += loss.gen_nll.iter().sum::<f64>();
            cls += loss.cls_nll.iter().sum::<f64>();
            let step_kl = loss.kl.iter().sum::<f64>();
            kl += step_kl;
            min_step_kl = min_step_kl.min(step_kl / chunk.len() as f64);
            let params = self.model.params_mut();
            params.zero_grad();
            tape.backward_into(loss.total, params)?;
            if let Some(max) = self.plan.max_grad_norm {
                clip_grad_norm(params, max);
            }
            adam_step(params, &mut self.adam)?;
        }
        self.epoch += 1;
        let n = data.len() as f64;
        let (kl, min_step_kl) = if self.model.config().use_kl_term { (kl / n, min_step_kl) } else { (0.0, 0.0) };
        Ok(EpochStats {
            epoch: self.epoch,
            sentences: data.len(),
            gen_nll: gen / n,
            cls_nll: cls / n,
            kl,
            min_step_kl,
            total: gen / n + cls / n + kl,
        })
    }

    /// Trains until `plan.epochs` epochs are complete, calling `on_epoch`
    /// after each one.
    pub fn fit<F>(&mut self, data: &Batch, mut on_epoch: F) -> Result<Vec<EpochStats>>
    where
        F: FnMut(&Trainer, &EpochStats) -> Result<()>,
    {
        let mut all = Vec::new();
        while self.epoch < self.plan.epochs {
            let stats = self.train_epoch(data)?;
            on_epoch(self, &stats)?;
            all.push(stats);
        }
        Ok(all)
    }

    pub fn checkpoint(&self, vocab: Option<&Vocabulary>, meta: serde_json::Value) -> Checkpoint {
        Checkpoint {
            config: self.model.config().clone(),
            params: self.model.params().clone(),
            adam: Some(self.adam.clone()),
            rng: self.rng.state(),
            epoch: self.epoch,
            vocab: vocab.cloned(),
            meta,
        }
    }
}

/// Appends one JSON line to a metrics file.
pub fn append_stats<T: Serialize>(path: impl AsRef<Path>, record: &T) -> Result<()> {
    let path = path.as_ref();
    let mut file =
        std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    file.write_all(&line).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_batch, LabeledCorpus, LabeledSentence};
    use crate::model::{InitMode, ModelConfig};

    fn toy() -> (Batch, ModelConfig) {
        let corpus = LabeledCorpus::new(
            vec![LabeledSentence::from_text("a b c", 0), LabeledSentence::from_text("d e", 1)],
            2,
            "toy",
        )
        .unwrap();
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        let cfg = ModelConfig { init_mode: InitMode::Adaptive, ..ModelConfig::tiny(vocab.len(), 2) };
        (encode_batch(corpus.sentences(), &vocab, 5).unwrap(), cfg)
    }

    fn plan(epochs: usize) -> TrainPlan {
        TrainPlan { epochs, batch_size: 2, seed: 4, adam: AdamConfig { lr: 0.01, ..AdamConfig::default() }, ..TrainPlan::default() }
    }

    #[test]
    fn epochs_are_deterministic() {
        let (data, cfg) = toy();
        let run = || {
            let mut t = Trainer::new(CatVrnn::new(cfg.clone(), 1).unwrap(), plan(3)).unwrap();
            t.fit(&data, |_, _| Ok(())).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn memorizes_two_sentences() {
        let (data, cfg) = toy();
        let mut t = Trainer::new(CatVrnn::new(cfg, 1).unwrap(), plan(150)).unwrap();
        let stats = t.fit(&data, |_, _| Ok(())).unwrap();
        assert!(stats[149].gen_nll <= 0.1 * stats[0].gen_nll, "{} -> {}", stats[0].gen_nll, stats[149].gen_nll);
        assert!(stats[19..].iter().all(|s| s.total < stats[0].total));
    }

    #[test]
    fn frozen_uniform_head_keeps_log_k() {
        let (data, cfg) = toy();
        let mut model = CatVrnn::new(cfg, 1).unwrap();
        for name in ["classifier.weight", "classifier.bias"] {
            model.params_mut().by_name_mut(name).unwrap().data_mut().fill(0.0);
        }
        let mut t = Trainer::new(model, plan(3)).unwrap();
        t.adam_mut().freeze("classifier.");
        for s in t.fit(&data, |_, _| Ok(())).unwrap() {
            assert!((s.cls_nll - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let (data, cfg) = toy();
        let mut full = Trainer::new(CatVrnn::new(cfg.clone(), 1).unwrap(), plan(4)).unwrap();
        full.fit(&data, |_, _| Ok(())).unwrap();

        let mut first = Trainer::new(CatVrnn::new(cfg, 1).unwrap(), plan(2)).unwrap();
        first.fit(&data, |_, _| Ok(())).unwrap();
        let bytes = first.checkpoint(None, serde_json::Value::Null).to_bytes().unwrap();
        let mut resumed = Trainer::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap(), plan(4)).unwrap();
        resumed.fit(&data, |_, _| Ok(())).unwrap();
        assert_eq!(
            resumed.checkpoint(None, serde_json::Value::Null).state_digest().unwrap(),
            full.checkpoint(None, serde_json::Value::Null).state_digest().unwrap()
        );
    }

    #[test]
    fn empty_corpus_rejected() {
        let (_, cfg) = toy();
        let mut t = Trainer::new(CatVrnn::new(cfg, 1).unwrap(), plan(1)).unwrap();
        let empty = Batch { inputs: vec![], targets: vec![], lengths: vec![], categories: vec![] };
        assert!(t.train_epoch(&empty).is_err());
    }

    #[test]
    fn stats_stream_appends_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let s = EpochStats { epoch: 1, sentences: 2, gen_nll: 1.0, cls_nll: 0.5, kl: 0.0, min_step_kl: 0.0, total: 1.5 };
        append_stats(&p, &s).unwrap();
        append_stats(&p, &s).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 2);
    }
}
