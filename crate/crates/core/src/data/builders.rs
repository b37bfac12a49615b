//! Dataset deformations used to study how the auxiliary classification task
//! affects generation, plus a synthetic corpus with disjoint vocabularies.

use std::ops::RangeInclusive;

use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::corpus::{LabeledCorpus, LabeledSentence};
use crate::error::{Error, Result};

/// Sentences per (product, sentiment) cell of the quality base corpus.
pub const ICQ_SECTOR_SIZE: usize = 1000;
pub const ICQ_PRODUCTS: usize = 5;
/// Sentences per product in the accuracy series.
pub const ICA_PRODUCT_SIZE: usize = 2000;

/// Relabelings of the 5-product x 2-sentiment quality base corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IcqVariant {
    /// Everything is one category.
    OneC,
    /// Sentiment only.
    TwoC,
    /// Product only.
    FiveC,
    /// Product x sentiment.
    TenC,
}

impl IcqVariant {
    pub const ALL: [IcqVariant; 4] = [IcqVariant::OneC, IcqVariant::TwoC, IcqVariant::FiveC, IcqVariant::TenC];

    pub fn num_categories(self) -> usize {
        match self {
            IcqVariant::OneC => 1,
            IcqVariant::TwoC => 2,
            IcqVariant::FiveC => 5,
            IcqVariant::TenC => 10,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IcqVariant::OneC => "ICQ-1C",
            IcqVariant::TwoC => "ICQ-2C",
            IcqVariant::FiveC => "ICQ-5C",
            IcqVariant::TenC => "ICQ-10C",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().trim_start_matches("icq-") {
            "1c" => Some(IcqVariant::OneC),
            "2c" => Some(IcqVariant::TwoC),
            "5c" => Some(IcqVariant::FiveC),
            "10c" => Some(IcqVariant::TenC),
            _ => None,
        }
    }

    /// Category of a base cell `2 * product + sentiment`.
    fn relabel(self, cell: usize) -> usize {
        match self {
            IcqVariant::OneC => 0,
            IcqVariant::TwoC => cell % 2,
            IcqVariant::FiveC => cell / 2,
            IcqVariant::TenC => cell,
        }
    }
}

/// Relabels the quality base corpus.
///
/// The base carries ten categories, `2 * product + sentiment` (sentiment 0
/// negative, 1 positive), with exactly [`ICQ_SECTOR_SIZE`] sentences each.
/// Only labels change; sentences and their order are untouched.
pub fn build_icq_variant(base: &LabeledCorpus, variant: IcqVariant) -> Result<LabeledCorpus> {
    let cells = 2 * ICQ_PRODUCTS;
    if base.num_categories() != cells {
        return Err(Error::Data(format!(
            "quality base must have {cells} (product, sentiment) cells, found {}",
            base.num_categories()
        )));
    }
    let counts = base.counts_per_category();
    if let Some((cell, n)) = counts.iter().enumerate().find(|(_, &n)| n != ICQ_SECTOR_SIZE) {
        return Err(Error::Data(format!("cell {cell} holds {n} sentences, expected {ICQ_SECTOR_SIZE}")));
    }
    let sentences = base
        .sentences()
        .iter()
        .map(|s| LabeledSentence::new(s.tokens.clone(), variant.relabel(s.category)))
        .collect();
    LabeledCorpus::new(sentences, variant.num_categories(), variant.name())
}

/// Builds ICA-`k`C from a corpus whose categories are products in the
/// desired order: the first `k` products, the first [`ICA_PRODUCT_SIZE`]
/// sentences of each. Product `i` keeps id `i`, so the series nests.
pub fn build_ica_series(products: &LabeledCorpus, k: usize) -> Result<LabeledCorpus> {
    let available = products.num_categories();
    if k < 2 || k > available {
        return Err(Error::Data(format!("ICA needs 2 <= K <= {available} products, got K = {k}")));
    }
    let counts = products.counts_per_category();
    if let Some((p, n)) = counts.iter().take(k).enumerate().find(|(_, &n)| n < ICA_PRODUCT_SIZE) {
        return Err(Error::Data(format!("product {p} has {n} sentences, needs {ICA_PRODUCT_SIZE}")));
    }
    let mut taken = vec![0usize; k];
    let mut sentences = Vec::with_capacity(k * ICA_PRODUCT_SIZE);
    for s in products.sentences() {
        if s.category < k && taken[s.category] < ICA_PRODUCT_SIZE {
            taken[s.category] += 1;
            sentences.push(s.clone());
        }
    }
    LabeledCorpus::new(sentences, k, format!("ICA-{k}C"))
}

/// Random sentences whose words come only from their own category's
/// vocabulary (`c{k}w{j}`), so category membership of any word is exact.
pub fn make_synthetic_corpus(
    num_categories: usize,
    per_category: usize,
    vocab_per_category: usize,
    len_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<LabeledCorpus> {
    if num_categories == 0 || vocab_per_category == 0 || *len_range.start() == 0 || len_range.is_empty() {
        return Err(Error::Config("synthetic corpus needs K >= 1, a non-empty vocabulary and lengths >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(num_categories * per_category);
    for k in 0..num_categories {
        for _ in 0..per_category {
            let n = rng.gen_range(len_range.clone());
            let tokens = (0..n).map(|_| format!("c{k}w{}", rng.gen_range(0..vocab_per_category))).collect();
            sentences.push(LabeledSentence::new(tokens, k));
        }
    }
    LabeledCorpus::new(sentences, num_categories, format!("synthetic@{seed}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeMap, HashSet};

    fn icq_base() -> LabeledCorpus {
        let mut sentences = Vec::new();
        for cell in 0..10 {
            for i in 0..ICQ_SECTOR_SIZE {
                sentences.push(LabeledSentence::from_text(&format!("p{} s{} n{i}", cell / 2, cell % 2), cell));
            }
        }
        LabeledCorpus::new(sentences, 10, "base").unwrap()
    }

    #[test]
    fn icq_two_c_splits_by_sentiment() {
        let c = build_icq_variant(&icq_base(), IcqVariant::TwoC).unwrap();
        assert_eq!(c.counts_per_category(), vec![5000, 5000]);
        for s in c.sentences() {
            assert_eq!(s.tokens[1], format!("s{}", s.category));
        }
    }

    #[test]
    fn icq_rejects_bad_composition() {
        let base = icq_base();
        let mut short = base.sentences().to_vec();
        short.pop();
        let short = LabeledCorpus::new(short, 10, "x").unwrap();
        assert!(build_icq_variant(&short, IcqVariant::TenC).is_err());
        let two = build_icq_variant(&base, IcqVariant::TwoC).unwrap();
        assert!(build_icq_variant(&two, IcqVariant::TenC).is_err());
    }

    #[test]
    fn icq_parse_names() {
        for v in IcqVariant::ALL {
            assert_eq!(IcqVariant::parse(v.name()), Some(v));
        }
        assert_eq!(IcqVariant::parse("3c"), None);
    }

    fn products(n: usize, per: usize) -> LabeledCorpus {
        let sentences = (0..n * per)
            .map(|i| LabeledSentence::from_text(&format!("prod{} item{i}", i % n), i % n))
            .collect();
        LabeledCorpus::new(sentences, n, "products").unwrap()
    }

    #[test]
    fn ica_sizes_and_errors() {
        let p = products(5, 2100);
        for k in 2..=5 {
            let c = build_ica_series(&p, k).unwrap();
            assert_eq!(c.len(), ICA_PRODUCT_SIZE * k);
            assert_eq!(c.num_categories(), k);
        }
        assert!(build_ica_series(&p, 1).is_err());
        assert!(build_ica_series(&p, 6).is_err());
        assert!(build_ica_series(&products(3, 1999), 2).is_err());
    }

    #[test]
    fn synthetic_vocabularies_disjoint() {
        let c = make_synthetic_corpus(2, 200, 50, 5..=10, 1).unwrap();
        assert_eq!(c.len(), 400);
        let mut by_cat: BTreeMap<usize, HashSet<&str>> = BTreeMap::new();
        for s in c.sentences() {
            by_cat.entry(s.category).or_default().extend(s.tokens.iter().map(String::as_str));
        }
        assert_eq!(by_cat[&0].intersection(&by_cat[&1]).count(), 0);
        assert!(by_cat[&0].len() <= 50);
        assert_eq!(c, make_synthetic_corpus(2, 200, 50, 5..=10, 1).unwrap());
    }
}
