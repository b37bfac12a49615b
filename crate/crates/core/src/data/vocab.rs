use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::data::corpus::LabeledCorpus;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Token <-> id map. Id 0 is PAD (which also marks sequence start), id 1 is UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an explicit id-ordered token list whose first two entries are the specials.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return Err(Error::Data(format!("vocabulary must start with {PAD_TOKEN}, {UNK_TOKEN}")));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Collects every token occurring at least `min_freq` times. Ids are
    /// assigned by descending frequency, ties broken lexicographically.
    pub fn build(corpus: &LabeledCorpus, min_freq: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::Empty("cannot build a vocabulary from an empty corpus"));
        }
        let mut freq: HashMap<&str, usize> = HashMap::new();
        for s in corpus.sentences() {
            for t in &s.tokens {
                *freq.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut words: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|(w, n)| *n >= min_freq.max(1) && *w != PAD_TOKEN && *w != UNK_TOKEN)
            .collect();
        words.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = [PAD_TOKEN, UNK_TOKEN]
            .into_iter()
            .chain(words.into_iter().map(|(w, _)| w))
            .map(str::to_string)
            .collect();
        Self::from_tokens(tokens)
    }

    /// Size including the two specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK_TOKEN, String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }

    /// Maps ids back to tokens, stopping at the first PAD.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().take_while(|&&i| i != PAD).map(|&i| self.token(i).to_string()).collect()
    }

    /// Hex SHA-256 over the id-ordered token list.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(h.finalize())
    }
}
