use crate::autodiff::Tape;
use crate::data::{encode_batch, Batch, LabeledSentence, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{CatVrnn, Phase};
use crate::rng::Rng;

const CHUNK: usize = 128;

/// `exp` of the mean teacher-forced cross-entropy over real tokens plus one
/// terminating PAD per sentence. Latents are drawn from a stream seeded by
/// `seed`.
pub fn perplexity(model: &CatVrnn, batch: &Batch, seed: u64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("perplexity corpus"));
    }
    let t_max = model.config().max_len;
    let mut rng = Rng::new(seed);
    let mut total = 0.0;
    let mut count = 0usize;
    for start in (0..batch.len()).step_by(CHUNK) {
        let end = (start + CHUNK).min(batch.len());
        let mut tape = Tape::new();
        let fwd =
            model.forward_batch(&mut tape, &batch.inputs[start..end], &batch.categories[start..end], Phase::Eval, &mut rng)?;
        let mut column = vec![0; end - start];
        for (t, &logits) in fwd.step_logits.iter().enumerate() {
            for (slot, row) in column.iter_mut().zip(&batch.targets[start..end]) {
                *slot = row[t];
            }
            let ce = tape.cross_entropy(logits, &column)?;
            for (i, v) in tape.value(ce).iter().enumerate() {
                let len = batch.lengths[start + i];
                if t < (len + 1).min(t_max) {
                    total += v;
                    count += 1;
                }
            }
        }
    }
    let ppl = (total / count as f64).exp();
    if !ppl.is_finite() {
        return Err(Error::NonFinite(format!("perplexity {ppl}")));
    }
    Ok(ppl)
}

/// Encodes `sentences` with `vocab` and scores them.
pub fn corpus_perplexity(model: &CatVrnn, sentences: &[LabeledSentence], vocab: &Vocabulary, seed: u64) -> Result<f64> {
    if vocab.len() != model.config().vocab_size {
        return Err(Error::Data(format!(
            "vocabulary of {} tokens does not match the model's {}",
            vocab.len(),
            model.config().vocab_size
        )));
    }
    perplexity(model, &encode_batch(sentences, vocab, model.config().max_len)?, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{LabeledCorpus, PAD};
    use crate::model::ModelConfig;
    use crate::nn::log_softmax;

    fn setup() -> (CatVrnn, Vocabulary, Vec<LabeledSentence>) {
        let sentences = vec![LabeledSentence::from_text("a b", 0), LabeledSentence::from_text("c d e f g", 1)];
        let corpus = LabeledCorpus::new(sentences.clone(), 2, "t").unwrap();
        let vocab = Vocabulary::build(&corpus, 1).unwrap();
        let model = CatVrnn::new(ModelConfig::tiny(vocab.len(), 2), 2).unwrap();
        (model, vocab, sentences)
    }

    #[test]
    fn uniform_model_scores_vocab_size() {
        let (mut model, vocab, sentences) = setup();
        for name in ["output.weight", "output.bias"] {
            model.params_mut().by_name_mut(name).unwrap().data_mut().fill(0.0);
        }
        let p = corpus_perplexity(&model, &sentences, &vocab, 0).unwrap();
        assert!((p - vocab.len() as f64).abs() < 1e-9, "{p}");
    }

    #[test]
    fn matches_hand_computed_two_token_case() {
        let (model, vocab, _) = setup();
        let s = vec![LabeledSentence::from_text("a b", 0)];
        let p = corpus_perplexity(&model, &s, &vocab, 5).unwrap();
        // Scored targets: a, b and the terminating PAD.
        let ids = [vocab.id("a"), vocab.id("b"), PAD, PAD, PAD];
        let inputs = [PAD, ids[0], ids[1], PAD, PAD];
        let fwd = model.forward_teacher(&inputs, 0, Phase::Eval, &mut Rng::new(5)).unwrap();
        let nll: f64 = (0..3).map(|t| -log_softmax(&fwd.step_logits[t])[ids[t]]).sum();
        assert!((p - (nll / 3.0).exp()).abs() < 1e-10);
        assert!(p >= 1.0);
    }

    #[test]
    fn empty_corpus_rejected() {
        let (model, vocab, _) = setup();
        assert!(corpus_perplexity(&model, &[], &vocab, 0).is_err());
    }
}
