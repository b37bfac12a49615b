//! Category accuracy, perplexity and forward/backward BLEU.

pub mod bleu;
pub mod classifier;
pub mod perplexity;
pub mod report;

pub use bleu::{
    bleu_backward, bleu_corpus, bleu_forward, bleu_harmonic, ngram_stats, subsample_references, NgramStats,
    BLEU_SMOOTHING,
};
pub use classifier::{category_accuracy, CnnConfig, EvalClassifier, SentenceClassifier, WordMembershipOracle};
pub use perplexity::{corpus_perplexity, perplexity};
pub use report::{eval_report, generate_labeled, score_generated, EvalOptions, MetricsReport};
