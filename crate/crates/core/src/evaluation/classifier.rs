//! Sentence classifiers used to score category accuracy of generated text.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::data::{LabeledCorpus, LabeledSentence, Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::tensor::{ParamId, ParamStore, Tensor};
use crate::training::{adam_step, AdamConfig, AdamState};

pub trait SentenceClassifier {
    fn num_categories(&self) -> usize;

    /// Predicted category, or `None` when the classifier abstains.
    fn predict(&self, tokens: &[String]) -> Option<usize>;

    fn predict_all(&self, sentences: &[Vec<String>]) -> Vec<Option<usize>> {
        sentences.iter().map(|s| self.predict(s)).collect()
    }
}

/// Fraction of sentences whose prediction equals their intended category.
pub fn category_accuracy<C: SentenceClassifier + ?Sized>(generated: &[LabeledSentence], clf: &C) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Empty("generated sentences"));
    }
    if let Some(s) = generated.iter().find(|s| s.category >= clf.num_categories()) {
        return Err(Error::UnsupportedCategory {
            category: s.category,
            reason: format!("classifier knows {} categories", clf.num_categories()),
        });
    }
    let tokens: Vec<Vec<String>> = generated.iter().map(|s| s.tokens.clone()).collect();
    let hits = clf
        .predict_all(&tokens)
        .into_iter()
        .zip(generated)
        .filter(|(p, s)| *p == Some(s.category))
        .count();
    Ok(hits as f64 / generated.len() as f64)
}

/// Votes with the category of each known word; exact when category
/// vocabularies are disjoint. Abstains on ties and on unknown-only input.
#[derive(Debug, Clone)]
pub struct WordMembershipOracle {
    owner: HashMap<String, Option<usize>>,
    num_categories: usize,
}

impl WordMembershipOracle {
    pub fn from_corpus(corpus: &LabeledCorpus) -> Self {
        let mut owner: HashMap<String, Option<usize>> = HashMap::new();
        for s in corpus.sentences() {
            for w in &s.tokens {
                owner
                    .entry(w.clone())
                    .and_modify(|o| {
                        if *o != Some(s.category) {
                            *o = None;
                        }
                    })
                    .or_insert(Some(s.category));
            }
        }
        Self { owner, num_categories: corpus.num_categories() }
    }
}

impl SentenceClassifier for WordMembershipOracle {
    fn num_categories(&self) -> usize {
        self.num_categories
    }

    fn predict(&self, tokens: &[String]) -> Option<usize> {
        let mut votes = vec![0usize; self.num_categories];
        for w in tokens {
            if let Some(Some(c)) = self.owner.get(w) {
                votes[*c] += 1;
            }
        }
        let best = *votes.iter().max()?;
        if best == 0 || votes.iter().filter(|&&v| v == best).count() > 1 {
            return None;
        }
        votes.iter().position(|&v| v == best)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub embed_dim: usize,
    pub widths: Vec<usize>,
    pub feature_maps: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Held-out fraction used for validation accuracy.
    pub val_fraction: f64,
    /// Inputs are padded or truncated to this many tokens.
    pub max_len: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            widths: vec![3, 4, 5],
            feature_maps: 100,
            dropout: 0.5,
            epochs: 10,
            batch_size: 50,
            lr: 1e-3,
            val_fraction: 0.1,
            max_len: 30,
        }
    }
}

impl CnnConfig {
    fn validate(&self) -> Result<()> {
        let widest = self.widths.iter().copied().max().unwrap_or(0);
        if self.embed_dim == 0 || self.feature_maps == 0 || self.widths.contains(&0) || widest == 0 {
            return Err(Error::Config("classifier dimensions must be positive".into()));
        }
        if self.max_len < widest {
            return Err(Error::Config(format!("max_len {} is shorter than the widest filter {widest}", self.max_len)));
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("dropout and val_fraction must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("epochs, batch_size and lr must be positive".into()));
        }
        Ok(())
    }
}

/// Convolutional sentence classifier: embeddings, one convolution per
/// filter width with max-over-time pooling, dropout, and a linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalClassifier {
    config: CnnConfig,
    vocab: Vocabulary,
    num_categories: usize,
    params: ParamStore,
    embedding: ParamId,
    convs: Vec<Linear>,
    head: Linear,
    validation_accuracy: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct SavedClassifier {
    config: CnnConfig,
    tokens: Vec<String>,
    num_categories: usize,
    validation_accuracy: Option<f64>,
    params: Vec<(String, Tensor)>,
}

impl EvalClassifier {
    fn init(config: CnnConfig, vocab: Vocabulary, num_categories: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let data = (0..vocab.len() * config.embed_dim).map(|_| normal.sample(&mut rng)).collect();
        let embedding = params.insert("embedding", Tensor::new(vec![vocab.len(), config.embed_dim], data)?)?;
        let convs = config
            .widths
            .iter()
            .map(|&w| Linear::new(&mut params, &format!("conv{w}"), w * config.embed_dim, config.feature_maps, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(&mut params, "head", config.widths.len() * config.feature_maps, num_categories, &mut rng)?;
        Ok(Self { config, vocab, num_categories, params, embedding, convs, head, validation_accuracy: None })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.config
    }

    pub fn validation_accuracy(&self) -> Option<f64> {
        self.validation_accuracy
    }

    fn encode(&self, tokens: &[String]) -> Vec<usize> {
        let mut ids: Vec<usize> = tokens.iter().take(self.config.max_len).map(|w| self.vocab.id(w)).collect();
        ids.resize(self.config.max_len, PAD);
        ids
    }

    fn logits(&self, tape: &mut Tape, batch: &[Vec<usize>], dropout: Option<&mut ChaCha8Rng>) -> Result<Var> {
        let l = self.config.max_len;
        let flat: Vec<usize> = batch.iter().flatten().copied().collect();
        let table = tape.param(&self.params, self.embedding);
        let x = tape.gather(table, &flat)?;
        let mut pooled = Vec::with_capacity(self.convs.len());
        for (conv, &w) in self.convs.iter().zip(&self.config.widths) {
            let windows = tape.unfold(x, l, w)?;
            let feats = conv.forward(tape, &self.params, windows)?;
            let feats = tape.relu(feats);
            pooled.push(tape.group_max(feats, l - w + 1)?);
        }
        let mut h = tape.concat(&pooled)?;
        if let Some(rng) = dropout {
            let p = self.config.dropout;
            if p > 0.0 {
                let (r, c) = tape.shape(h);
                let keep = 1.0 / (1.0 - p);
                let mask = (0..r * c).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
                let mask = tape.constant(r, c, mask)?;
                h = tape.mul(h, mask)?;
            }
        }
        self.head.forward(tape, &self.params, h)
    }

    fn class_scores(&self, tokens: &[Vec<String>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(tokens.len());
        for chunk in tokens.chunks(256) {
            let ids: Vec<Vec<usize>> = chunk.iter().map(|t| self.encode(t)).collect();
            let mut tape = Tape::new();
            let logits = self.logits(&mut tape, &ids, None)?;
            out.extend((0..chunk.len()).map(|i| tape.row(logits, i).to_vec()));
        }
        Ok(out)
    }

    /// Trains on a shuffled split of `corpus` and records validation accuracy.
    pub fn train(corpus: &LabeledCorpus, config: CnnConfig, seed: u64) -> Result<Self> {
        if corpus.num_categories() < 2 {
            return Err(Error::Data("the evaluation classifier needs at least two categories".into()));
        }
        if corpus.is_empty() {
            return Err(Error::Empty("classifier training corpus"));
        }
        let vocab = Vocabulary::build(corpus, 1)?;
        let mut clf = Self::init(config, vocab, corpus.num_categories(), seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut rng);
        let n_val = ((corpus.len() as f64 * clf.config.val_fraction).round() as usize).min(corpus.len() - 1);
        let (val, train) = order.split_at(n_val);
        let sentences = corpus.sentences();
        let encoded: Vec<Vec<usize>> = sentences.iter().map(|s| clf.encode(&s.tokens)).collect();

        let mut adam = AdamState::new(AdamConfig { lr: clf.config.lr, ..AdamConfig::default() }, &clf.params);
        let mut train = train.to_vec();
        for _ in 0..clf.config.epochs {
            train.shuffle(&mut rng);
            for chunk in train.chunks(clf.config.batch_size) {
                let ids: Vec<Vec<usize>> = chunk.iter().map(|&i| encoded[i].clone()).collect();
                let labels: Vec<usize> = chunk.iter().map(|&i| sentences[i].category).collect();
                let mut tape = Tape::new();
                let logits = clf.logits(&mut tape, &ids, Some(&mut rng))?;
                let ce = tape.cross_entropy(logits, &labels)?;
                let loss = tape.weighted_sum(ce, &vec![1.0 / chunk.len() as f64; chunk.len()])?;
                clf.params.zero_grad();
                tape.backward_into(loss, &mut clf.params)?;
                adam_step(&mut clf.params, &mut adam)?;
            }
        }
        clf.params.zero_grad();
        if !val.is_empty() {
            let held: Vec<LabeledSentence> = val.iter().map(|&i| sentences[i].clone()).collect();
            clf.validation_accuracy = Some(category_accuracy(&held, &clf)?);
        }
        Ok(clf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let saved = SavedClassifier {
            config: self.config.clone(),
            tokens: self.vocab.tokens().to_vec(),
            num_categories: self.num_categories,
            validation_accuracy: self.validation_accuracy,
            params: self.params.iter().map(|(_, n, t)| (n.to_string(), t.clone())).collect(),
        };
        std::fs::write(path, serde_json::to_vec(&saved)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let saved: SavedClassifier = serde_json::from_slice(&bytes)?;
        let vocab = Vocabulary::from_tokens(saved.tokens)?;
        let mut clf = Self::init(saved.config, vocab, saved.num_categories, 0)?;
        if saved.params.len() != clf.params.len() {
            return Err(Error::Checkpoint("classifier parameter count mismatch".into()));
        }
        for (name, t) in saved.params {
            let slot = clf
                .params
                .by_name_mut(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown classifier tensor `{name}`")))?;
            if slot.shape() != t.shape() {
                return Err(Error::Checkpoint(format!("classifier tensor `{name}` has the wrong shape")));
            }
            *slot = t;
        }
        clf.validation_accuracy = saved.validation_accuracy;
        Ok(clf)
    }
}

impl SentenceClassifier for EvalClassifier {
    fn num_categories(&self) -> usize {
        self.num_categories
    }

    fn predict(&self, tokens: &[String]) -> Option<usize> {
        self.predict_all(&[tokens.to_vec()]).pop().flatten()
    }

    fn predict_all(&self, sentences: &[Vec<String>]) -> Vec<Option<usize>> {
        // Shapes are fixed by construction, so scoring cannot fail.
        let scores = self.class_scores(sentences).expect("classifier forward pass");
        scores
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                        Some((_, b)) if b >= v => best,
                        _ => Some((i, v)),
                    })
                    .map(|(i, _)| i)
            })
            .collect()
    }
}
