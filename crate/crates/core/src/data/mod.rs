//! Corpus ingestion, vocabulary, batching and dataset builders.

pub mod batch;
pub mod builders;
pub mod corpus;
pub mod vocab;

pub use batch::{encode_batch, pad_sequence, Batch};
pub use builders::{build_ica_series, build_icq_variant, make_synthetic_corpus, IcqVariant, ICA_PRODUCT_SIZE, ICQ_PRODUCTS, ICQ_SECTOR_SIZE};
pub use corpus::{write_tsv_string, LabeledCorpus, LabeledSentence};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
