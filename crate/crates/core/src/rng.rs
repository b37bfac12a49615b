//! Seeded random streams.
//!
//! A single seed fans out into independent named streams so that, for
//! example, drawing extra latent noise never shifts the token sampler.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    /// Hidden-state initialization draws (the static initializer's `r`).
    Init,
    /// Training-time noise added by the adaptive initializer.
    Noise,
    /// Reparameterization noise for latent codes.
    Latent,
    /// Token sampling during generation.
    Sampling,
}

impl Stream {
    pub const ALL: [Stream; 4] = [Stream::Init, Stream::Noise, Stream::Latent, Stream::Sampling];

    fn index(self) -> usize {
        match self {
            Stream::Init => 0,
            Stream::Noise => 1,
            Stream::Latent => 2,
            Stream::Sampling => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    streams: [ChaCha8Rng; 4],
}

/// Serializable position of every stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    /// ChaCha word positions, decimal-encoded (they exceed JSON's safe integer range).
    pub positions: Vec<String>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let make = |s: Stream| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(s.index() as u64 + 1);
            r
        };
        Self { seed, streams: Stream::ALL.map(make) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&mut self, s: Stream) -> &mut ChaCha8Rng {
        &mut self.streams[s.index()]
    }

    /// `n` draws from U[0, 1).
    pub fn uniform(&mut self, s: Stream, n: usize) -> Vec<f64> {
        let r = self.stream(s);
        (0..n).map(|_| r.gen::<f64>()).collect()
    }

    /// `n` standard normal draws.
    pub fn normal(&mut self, s: Stream, n: usize) -> Vec<f64> {
        let r = self.stream(s);
        (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
    }

    /// Samples an index from an unnormalized non-negative weight vector.
    pub fn categorical(&mut self, s: Stream, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.stream(s).gen::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        // Rounding can leave `u` marginally above the last bucket.
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            positions: self.streams.iter().map(|r| r.get_word_pos().to_string()).collect(),
        }
    }

    pub fn from_state(state: &RngState) -> Result<Self> {
        if state.positions.len() != Stream::ALL.len() {
            return Err(Error::Checkpoint(format!(
                "rng state has {} streams, expected {}",
                state.positions.len(),
                Stream::ALL.len()
            )));
        }
        let mut rng = Self::new(state.seed);
        for (r, pos) in rng.streams.iter_mut().zip(&state.positions) {
            let pos: u128 = pos
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad rng position `{pos}`")))?;
            r.set_word_pos(pos);
        }
        Ok(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_draws() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        assert_eq!(a.normal(Stream::Latent, 16), b.normal(Stream::Latent, 16));
        assert_eq!(a.uniform(Stream::Init, 16), b.uniform(Stream::Init, 16));
    }

    #[test]
    fn streams_are_independent() {
        let mut a = Rng::new(7);
        let mut b = Rng::new(7);
        let _ = a.normal(Stream::Noise, 100);
        assert_eq!(a.uniform(Stream::Sampling, 8), b.uniform(Stream::Sampling, 8));
        let mut c = Rng::new(7);
        assert_ne!(c.uniform(Stream::Init, 8), Rng::new(7).uniform(Stream::Noise, 8));
    }

    #[test]
    fn state_roundtrip_continues_sequence() {
        let mut a = Rng::new(3);
        let _ = a.normal(Stream::Latent, 5);
        let _ = a.uniform(Stream::Sampling, 3);
        let json = serde_json::to_string(&a.state()).unwrap();
        let mut b = Rng::from_state(&serde_json::from_str(&json).unwrap()).unwrap();
        for s in Stream::ALL {
            assert_eq!(a.uniform(s, 4), b.uniform(s, 4));
        }
    }

    #[test]
    fn categorical_respects_zero_weights() {
        let mut r = Rng::new(1);
        for _ in 0..200 {
            let i = r.categorical(Stream::Sampling, &[0.0, 1.0, 0.0, 3.0]);
            assert!(i == 1 || i == 3);
        }
    }
}
