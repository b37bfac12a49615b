//! Shared fixtures for the benchmarks.

use catvrnn::data::{encode_batch, make_synthetic_corpus, Batch, LabeledCorpus, Vocabulary};
use catvrnn::model::{CatVrnn, InitMode, ModelConfig};

pub struct Fixture {
    pub corpus: LabeledCorpus,
    pub vocab: Vocabulary,
    pub batch: Batch,
    pub model: CatVrnn,
}

/// Two-category synthetic corpus and a small model over it.
pub fn fixture(init: InitMode, use_kl_term: bool) -> Fixture {
    let corpus = make_synthetic_corpus(2, 200, 50, 4..=8, 7).expect("corpus");
    let vocab = Vocabulary::build(&corpus, 1).expect("vocabulary");
    let batch = encode_batch(corpus.sentences(), &vocab, 10).expect("batch");
    let cfg = ModelConfig {
        embed_dim: 16,
        hidden_dim: 32,
        latent_dim: 8,
        max_len: 10,
        encoder_widths: vec![32, 32],
        decoder_widths: vec![32, 16],
        prior_width: 32,
        init_mode: init,
        use_kl_term,
        static_omega: 1.0625,
        ..ModelConfig::new(vocab.len(), 2)
    };
    let model = CatVrnn::new(cfg, 1).expect("model");
    Fixture { corpus, vocab, batch, model }
}

/// Sentences as token-id vectors, for the metric benchmarks.
pub fn token_corpus(f: &Fixture) -> Vec<Vec<usize>> {
    f.corpus.sentences().iter().map(|s| f.vocab.encode(&s.tokens)).collect()
}
