use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{LabeledCorpus, LabeledSentence, Vocabulary};
use crate::error::{Error, Result};
use crate::evaluation::bleu::{bleu_backward, bleu_forward, bleu_harmonic, subsample_references};
use crate::evaluation::classifier::{category_accuracy, SentenceClassifier};
use crate::evaluation::perplexity::corpus_perplexity;
use crate::model::CatVrnn;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub category_accuracy: f64,
    /// Absent when scoring externally generated text.
    pub perplexity: Option<f64>,
    pub bleu_f: BTreeMap<usize, f64>,
    pub bleu_b: BTreeMap<usize, f64>,
    pub bleu_ha: BTreeMap<usize, f64>,
    pub generated: usize,
    pub references: usize,
    /// Size of the training subsample used for backward BLEU, when active.
    pub backward_subsample: Option<usize>,
    pub seed: u64,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub orders: Vec<usize>,
    pub seed: u64,
    /// Caps the training sentences scored in backward BLEU.
    pub max_backward_references: Option<usize>,
    /// Frequency threshold the checkpoint vocabulary was built with.
    pub min_freq: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { orders: vec![2, 3, 4, 5], seed: 0, max_backward_references: None, min_freq: 1 }
    }
}

/// Scores generated sentences (intended category, tokens) against the
/// training corpus. Perplexity is left empty.
pub fn score_generated<C: SentenceClassifier + ?Sized>(
    generated: &[LabeledSentence],
    training: &LabeledCorpus,
    clf: &C,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if opts.orders.is_empty() {
        return Err(Error::Config("no BLEU orders requested".into()));
    }
    let accuracy = category_accuracy(generated, clf)?;
    let gen: Vec<&[String]> = generated.iter().map(|s| s.tokens.as_slice()).collect();
    let refs: Vec<&[String]> = training.sentences().iter().map(|s| s.tokens.as_slice()).collect();
    let (back_refs, backward_subsample) = match opts.max_backward_references {
        Some(max) if refs.len() > max => (subsample_references(&refs, max, opts.seed), Some(max)),
        _ => (refs.clone(), None),
    };
    let (mut bleu_f, mut bleu_b, mut bleu_ha) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for &n in &opts.orders {
        let f = bleu_forward(&gen, &refs, n)?;
        let b = bleu_backward(&gen, &back_refs, n)?;
        bleu_f.insert(n, f);
        bleu_b.insert(n, b);
        bleu_ha.insert(n, bleu_harmonic(f, b));
    }
    Ok(MetricsReport {
        category_accuracy: accuracy,
        perplexity: None,
        bleu_f,
        bleu_b,
        bleu_ha,
        generated: generated.len(),
        references: refs.len(),
        backward_subsample,
        seed: opts.seed,
        config: serde_json::Value::Null,
    })
}

/// Samples `per_category` sentences for every category of the model.
pub fn generate_labeled(model: &CatVrnn, vocab: &Vocabulary, per_category: usize, seed: u64) -> Result<Vec<LabeledSentence>> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::with_capacity(per_category * model.config().num_categories);
    for c in 0..model.config().num_categories {
        for ids in model.generate(c, per_category, &mut rng)? {
            out.push(LabeledSentence::new(vocab.decode(&ids), c));
        }
    }
    Ok(out)
}

/// Generates from the model, then computes the full metric suite including
/// perplexity on the training corpus.
pub fn eval_report<C: SentenceClassifier + ?Sized>(
    model: &CatVrnn,
    vocab: &Vocabulary,
    training: &LabeledCorpus,
    clf: &C,
    per_category: usize,
    opts: &EvalOptions,
) -> Result<(MetricsReport, Vec<LabeledSentence>)> {
    if Vocabulary::build(training, opts.min_freq)?.digest() != vocab.digest() {
        return Err(Error::Data("vocabulary digest mismatch between checkpoint and corpus".into()));
    }
    if training.num_categories() > model.config().num_categories {
        return Err(Error::Data(format!(
            "corpus has {} categories, model has {}",
            training.num_categories(),
            model.config().num_categories
        )));
    }
    let generated = generate_labeled(model, vocab, per_category, opts.seed)?;
    let mut report = score_generated(&generated, training, clf, opts)?;
    report.perplexity = Some(corpus_perplexity(model, training.sentences(), vocab, opts.seed)?);
    report.config = serde_json::to_value(model.config())?;
    Ok((report, generated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic_corpus;
    use crate::evaluation::classifier::WordMembershipOracle;
    use crate::model::ModelConfig;

    #[test]
    fn self_copy_scores_perfect_bleu() {
        let c = make_synthetic_corpus(2, 20, 8, 3..=6, 1).unwrap();
        let oracle = WordMembershipOracle::from_corpus(&c);
        let r = score_generated(c.sentences(), &c, &oracle, &EvalOptions::default()).unwrap();
        assert_eq!(r.category_accuracy, 1.0);
        for n in 2..=5 {
            assert!((r.bleu_f[&n] - 1.0).abs() < 1e-12);
            assert!((r.bleu_ha[&n] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn report_is_deterministic_and_in_range() {
        let c = make_synthetic_corpus(2, 10, 6, 2..=4, 1).unwrap();
        let vocab = Vocabulary::build(&c, 1).unwrap();
        let model = CatVrnn::new(ModelConfig::tiny(vocab.len(), 2), 0).unwrap();
        let oracle = WordMembershipOracle::from_corpus(&c);
        let opts = EvalOptions { seed: 3, ..EvalOptions::default() };
        let (a, gen) = eval_report(&model, &vocab, &c, &oracle, 7, &opts).unwrap();
        let (b, _) = eval_report(&model, &vocab, &c, &oracle, 7, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(gen.len(), 14);
        assert!((0.0..=1.0).contains(&a.category_accuracy));
        assert!(a.perplexity.unwrap() >= 1.0);
        for n in 2..=5 {
            let (f, bb, h) = (a.bleu_f[&n], a.bleu_b[&n], a.bleu_ha[&n]);
            assert!(f.min(bb) <= h + 1e-15 && h <= f.max(bb) + 1e-15);
        }
    }

    #[test]
    fn vocabulary_mismatch_rejected() {
        let c = make_synthetic_corpus(2, 10, 6, 2..=4, 1).unwrap();
        let other = make_synthetic_corpus(2, 10, 6, 2..=4, 2).unwrap();
        let vocab = Vocabulary::build(&other, 1).unwrap();
        let model = CatVrnn::new(ModelConfig::tiny(vocab.len(), 2), 0).unwrap();
        let oracle = WordMembershipOracle::from_corpus(&c);
        assert!(eval_report(&model, &vocab, &c, &oracle, 2, &EvalOptions::default()).is_err());
    }
}
