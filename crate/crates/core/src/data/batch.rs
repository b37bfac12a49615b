use crate::data::corpus::LabeledSentence;
use crate::data::vocab::{Vocabulary, PAD};
use crate::error::{Error, Result};

/// Teacher-forcing batch. Row `i` of `inputs` is `[PAD, w1, .., wS, PAD..]`
/// and row `i` of `targets` is the same sequence shifted left by one,
/// both exactly `T` long.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
    pub lengths: Vec<usize>,
    pub categories: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }
}

/// Builds the input/target pair for one sentence of token ids.
pub fn pad_sequence(ids: &[usize], max_len: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if ids.len() > max_len {
        return Err(Error::Data(format!("sentence of {} tokens exceeds max length {max_len}", ids.len())));
    }
    let mut targets = ids.to_vec();
    targets.resize(max_len, PAD);
    let mut inputs = Vec::with_capacity(max_len);
    inputs.push(PAD);
    inputs.extend_from_slice(&targets[..max_len - 1]);
    Ok((inputs, targets))
}

/// Encodes sentences (OOV words become UNK) into a padded batch.
pub fn encode_batch(sentences: &[LabeledSentence], vocab: &Vocabulary, max_len: usize) -> Result<Batch> {
    if max_len == 0 {
        return Err(Error::Config("max length must be at least 1".into()));
    }
    let mut batch = Batch { inputs: vec![], targets: vec![], lengths: vec![], categories: vec![] };
    for s in sentences {
        let ids = vocab.encode(&s.tokens);
        let (inp, tgt) = pad_sequence(&ids, max_len)?;
        batch.inputs.push(inp);
        batch.targets.push(tgt);
        batch.lengths.push(s.len());
        batch.categories.push(s.category);
    }
    Ok(batch)
}
