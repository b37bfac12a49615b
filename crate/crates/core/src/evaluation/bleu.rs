//! Corpus-level BLEU in both directions.
//!
//! Forward BLEU scores generated text against the training set (fluency),
//! backward BLEU swaps the roles (diversity).

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Floor substituted for a zero clipped count.
pub const BLEU_SMOOTHING: f64 = 1e-9;

/// Sufficient statistics of corpus BLEU.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NgramStats {
    /// `clipped[k-1]`: clipped `k`-gram matches summed over candidates.
    pub clipped: Vec<u64>,
    /// `totals[k-1]`: candidate `k`-grams.
    pub totals: Vec<u64>,
    pub candidate_len: u64,
    /// Sum over candidates of the closest reference length.
    pub reference_len: u64,
}

impl NgramStats {
    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            0.0
        } else if self.candidate_len > self.reference_len {
            1.0
        } else {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        }
    }

    /// Geometric mean of the modified precisions times the brevity penalty.
    /// Orders for which the candidates hold no k-gram at all are left out.
    pub fn score(&self) -> f64 {
        let mut log_sum = 0.0;
        let mut orders = 0;
        for (&c, &t) in self.clipped.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let num = if c == 0 { BLEU_SMOOTHING } else { c as f64 };
            log_sum += (num / t as f64).ln();
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        self.brevity_penalty() * (log_sum / orders as f64).exp()
    }
}

fn count_ngrams<T: Eq + Hash>(s: &[T], k: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if s.len() >= k {
        for w in s.windows(k) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("BLEU order must be at least 1".into()));
    }
    Ok(())
}

/// Collects [`NgramStats`] for orders `1..=n`. Each candidate is clipped
/// against the maximum count of a k-gram in any single reference.
pub fn ngram_stats<T, C, R>(candidates: &[C], references: &[R], n: usize) -> Result<NgramStats>
where
    T: Eq + Hash,
    C: AsRef<[T]>,
    R: AsRef<[T]>,
{
    check_order(n)?;
    if candidates.is_empty() {
        return Err(Error::Empty("BLEU candidates"));
    }
    if references.is_empty() {
        return Err(Error::Empty("BLEU references"));
    }
    let mut max_ref: Vec<HashMap<&[T], u64>> = vec![HashMap::new(); n];
    for r in references {
        for (k, table) in max_ref.iter_mut().enumerate() {
            for (g, c) in count_ngrams(r.as_ref(), k + 1) {
                let slot = table.entry(g).or_insert(0);
                *slot = (*slot).max(c);
            }
        }
    }
    let mut ref_lens: Vec<usize> = references.iter().map(|r| r.as_ref().len()).collect();
    ref_lens.sort_unstable();
    ref_lens.dedup();

    let mut stats =
        NgramStats { clipped: vec![0; n], totals: vec![0; n], candidate_len: 0, reference_len: 0 };
    for cand in candidates {
        let cand = cand.as_ref();
        stats.candidate_len += cand.len() as u64;
        stats.reference_len += closest_length(&ref_lens, cand.len()) as u64;
        for k in 0..n {
            for (g, c) in count_ngrams(cand, k + 1) {
                stats.totals[k] += c;
                stats.clipped[k] += c.min(max_ref[k].get(g).copied().unwrap_or(0));
            }
        }
    }
    Ok(stats)
}

/// Closest value in a sorted, deduplicated list; ties go to the shorter.
fn closest_length(sorted: &[usize], len: usize) -> usize {
    let i = sorted.partition_point(|&l| l < len);
    match (i.checked_sub(1).map(|j| sorted[j]), sorted.get(i).copied()) {
        (Some(lo), Some(hi)) => {
            if len - lo <= hi - len {
                lo
            } else {
                hi
            }
        }
        (Some(lo), None) => lo,
        (None, Some(hi)) => hi,
        (None, None) => 0,
    }
}

/// Corpus BLEU-`n` of `candidates` against the pooled `references`.
pub fn bleu_corpus<T, C, R>(candidates: &[C], references: &[R], n: usize) -> Result<f64>
where
    T: Eq + Hash,
    C: AsRef<[T]>,
    R: AsRef<[T]>,
{
    Ok(ngram_stats(candidates, references, n)?.score())
}

pub fn bleu_forward<T, G, R>(generated: &[G], training: &[R], n: usize) -> Result<f64>
where
    T: Eq + Hash,
    G: AsRef<[T]>,
    R: AsRef<[T]>,
{
    bleu_corpus(generated, training, n)
}

pub fn bleu_backward<T, G, R>(generated: &[G], training: &[R], n: usize) -> Result<f64>
where
    T: Eq + Hash,
    G: AsRef<[T]>,
    R: AsRef<[T]>,
{
    bleu_corpus(training, generated, n)
}

/// `2fb / (f + b)`, and 0 when both are 0.
pub fn bleu_harmonic(f: f64, b: f64) -> f64 {
    if f + b == 0.0 {
        0.0
    } else {
        2.0 * f * b / (f + b)
    }
}

/// Deterministic subsample of at most `max` items, keeping their order.
pub fn subsample_references<R: Clone>(refs: &[R], max: usize, seed: u64) -> Vec<R> {
    if refs.len() <= max {
        return refs.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, refs.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| refs[i].clone()).collect()
}
