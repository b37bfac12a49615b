//! Category-dependent initial hidden states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::rng::{Rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub h: Vec<f64>,
}

impl HiddenState {
    pub fn zeros(dim: usize) -> Self {
        Self { h: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|v| v.is_finite())
    }
}

/// `omega * (-1)^c * softmax(r)` for a given draw `r`.
pub fn static_state_from_draw(category: usize, omega: f64, r: &[f64]) -> Result<HiddenState> {
    if category >= 2 {
        return Err(Error::UnsupportedCategory {
            category,
            reason: "the static initializer only distinguishes two categories".into(),
        });
    }
    let sign = if category == 0 { 1.0 } else { -1.0 };
    Ok(HiddenState { h: softmax(r).into_iter().map(|p| omega * sign * p).collect() })
}

/// Static initializer with `r ~ U[0,1)^dim` from the init stream.
pub fn init_hidden_static(category: usize, omega: f64, dim: usize, rng: &mut Rng) -> Result<HiddenState> {
    if category >= 2 {
        return static_state_from_draw(category, omega, &[]);
    }
    let r = rng.uniform(Stream::Init, dim);
    static_state_from_draw(category, omega, &r)
}

/// Adaptive initializer `c * omega + b`, plus `U[0,1)` noise from the noise
/// stream when `train_noise` is set.
pub fn init_hidden_adaptive(
    category: usize,
    omega: &[f64],
    bias: &[f64],
    train_noise: bool,
    rng: &mut Rng,
) -> Result<HiddenState> {
    if omega.len() != bias.len() {
        return Err(Error::shape("init_hidden_adaptive", format!("{} vs {}", omega.len(), bias.len())));
    }
    let c = category as f64;
    let mut h: Vec<f64> = omega.iter().zip(bias).map(|(w, b)| c * w + b).collect();
    if train_noise {
        for (x, r) in h.iter_mut().zip(rng.uniform(Stream::Noise, omega.len())) {
            *x += r;
        }
    }
    Ok(HiddenState { h })
}

pub fn init_hidden_zero(dim: usize) -> HiddenState {
    HiddenState::zeros(dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_sign_and_sum() {
        let mut rng = Rng::new(0);
        let h0 = init_hidden_static(0, 8.5, 256, &mut rng).unwrap();
        assert!(h0.h.iter().all(|&v| v > 0.0));
        assert!((h0.h.iter().sum::<f64>() - 8.5).abs() < 1e-10);
        let h1 = init_hidden_static(1, 8.5, 256, &mut rng).unwrap();
        assert!(h1.h.iter().all(|&v| v < 0.0));
        assert!((h1.h.iter().sum::<f64>() + 8.5).abs() < 1e-10);
    }

    #[test]
    fn static_symmetric_draw() {
        let h = static_state_from_draw(0, 8.5, &[0.0, 0.0]).unwrap();
        assert_eq!(h.h, vec![4.25, 4.25]);
    }

    #[test]
    fn static_rejects_third_category() {
        let err = init_hidden_static(2, 8.5, 4, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::UnsupportedCategory { category: 2, .. }));
    }

    #[test]
    fn adaptive_eval_cases() {
        let mut rng = Rng::new(0);
        let zero = init_hidden_adaptive(3, &[0.0; 4], &[0.0; 4], false, &mut rng).unwrap();
        assert_eq!(zero.h, vec![0.0; 4]);
        let omega = [0.5, -1.25, 3.0];
        let bias = [0.1, 0.2, -0.3];
        let h0 = init_hidden_adaptive(0, &omega, &bias, false, &mut rng).unwrap();
        assert_eq!(h0.h, bias.to_vec());
        let h1 = init_hidden_adaptive(1, &omega, &bias, false, &mut rng).unwrap();
        let h2 = init_hidden_adaptive(2, &omega, &bias, false, &mut rng).unwrap();
        for i in 0..3 {
            assert!((h2.h[i] - h1.h[i] - omega[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn adaptive_training_noise_in_unit_interval() {
        let h = init_hidden_adaptive(0, &[0.0; 64], &[0.0; 64], true, &mut Rng::new(5)).unwrap();
        assert!(h.h.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!(h.h.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn zero_init_ignores_rng() {
        assert_eq!(init_hidden_zero(5).h, vec![0.0; 5]);
        assert_eq!(init_hidden_zero(3).h.iter().sum::<f64>(), 0.0);
    }
}
