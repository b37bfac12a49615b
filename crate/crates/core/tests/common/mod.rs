//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Occurrences of `gram` in `s`, by direct window comparison.
fn occurrences(s: &[u8], gram: &[u8]) -> usize {
    if gram.len() > s.len() {
        return 0;
    }
    (0..=s.len() - gram.len()).filter(|&i| &s[i..i + gram.len()] == gram).count()
}

/// Corpus BLEU-`n` by brute-force counting: every candidate k-gram position
/// is clipped by its own share of `min(count in candidate, max count in any
/// reference)`.
pub fn bleu_oracle(cands: &[Vec<u8>], refs: &[Vec<u8>], n: usize) -> f64 {
    let c_len: usize = cands.iter().map(Vec::len).sum();
    if c_len == 0 {
        return 0.0;
    }
    let mut r_len = 0usize;
    for c in cands {
        let mut best: Option<usize> = None;
        for r in refs {
            let better = match best {
                None => true,
                Some(b) => {
                    let (d_new, d_old) = (r.len().abs_diff(c.len()), b.abs_diff(c.len()));
                    d_new < d_old || (d_new == d_old && r.len() < b)
                }
            };
            if better {
                best = Some(r.len());
            }
        }
        r_len += best.unwrap_or(0);
    }
    let mut log_p = Vec::new();
    for k in 1..=n {
        let mut total = 0usize;
        let mut clipped = 0.0f64;
        for c in cands {
            if c.len() < k {
                continue;
            }
            for i in 0..=c.len() - k {
                let g = &c[i..i + k];
                total += 1;
                let in_cand = occurrences(c, g);
                let in_ref = refs.iter().map(|r| occurrences(r, g)).max().unwrap_or(0);
                clipped += in_cand.min(in_ref) as f64 / in_cand as f64;
            }
        }
        if total == 0 {
            continue;
        }
        let clipped = clipped.round();
        let num = if clipped == 0.0 { 1e-9 } else { clipped };
        log_p.push(num / total as f64);
    }
    if log_p.is_empty() {
        return 0.0;
    }
    let geo = log_p.iter().product::<f64>().powf(1.0 / log_p.len() as f64);
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    bp * geo
}

/// Every sentence over `alphabet` letters with length at most `max_len`.
pub fn all_sentences(alphabet: u8, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for a in 0..alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(a);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// A random corpus of 1..=`max_sentences` sentences of 0..=`max_len` tokens.
pub fn random_corpus(rng: &mut ChaCha8Rng, alphabet: u8, max_sentences: usize, max_len: usize) -> Vec<Vec<u8>> {
    let n = rng.gen_range(1..=max_sentences);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(0..=max_len);
            (0..len).map(|_| rng.gen_range(0..alphabet)).collect()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
