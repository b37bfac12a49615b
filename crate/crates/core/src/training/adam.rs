use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment buffers, aligned with the parameter store order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    /// Tensors whose name starts with one of these prefixes are not updated.
    pub frozen: Vec<String>,
    pub names: Vec<String>,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect();
        Self {
            config,
            step: 0,
            frozen: Vec::new(),
            names: store.iter().map(|(_, n, _)| n.to_string()).collect(),
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn freeze(&mut self, prefix: impl Into<String>) {
        self.frozen.push(prefix.into());
    }

    pub fn is_frozen(&self, name: &str) -> bool {
        self.frozen.iter().any(|p| name.starts_with(p.as_str()))
    }

    /// Checks that the buffers mirror `store`.
    pub fn validate(&self, store: &ParamStore) -> Result<()> {
        if self.names.len() != store.len() || self.m.len() != store.len() || self.v.len() != store.len() {
            return Err(Error::Invariant(format!(
                "optimizer tracks {} tensors, store has {}",
                self.names.len(),
                store.len()
            )));
        }
        for (((_, name, t), expected), (m, v)) in store.iter().zip(&self.names).zip(self.m.iter().zip(&self.v)) {
            if name != expected || m.len() != t.len() || v.len() != t.len() {
                return Err(Error::Invariant(format!("optimizer buffers do not match tensor `{name}`")));
            }
        }
        Ok(())
    }
}

/// One bias-corrected Adam update from the gradients held in `store`.
/// Every non-frozen tensor must carry a gradient; nothing is updated otherwise.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<()> {
    state.validate(store)?;
    for (_, name, t) in store.iter() {
        if !state.is_frozen(name) && t.grad().is_none() {
            return Err(Error::MissingGradient(name.to_string()));
        }
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    for (idx, (name, t)) in store.iter_mut().enumerate() {
        if state.frozen.iter().any(|p| name.starts_with(p.as_str())) {
            continue;
        }
        let g = t.grad().map(<[f64]>::to_vec).unwrap_or_default();
        let (m, v) = (&mut state.m[idx], &mut state.v[idx]);
        for (((p, g), m), v) in t.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store
        .iter()
        .filter_map(|(_, _, t)| t.grad())
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, t) in store.iter_mut() {
            if let Some(g) = t.grad().map(|g| g.iter().map(|x| x * (scale - 1.0)).collect::<Vec<_>>()) {
                t.accumulate_grad(&g);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_store(w: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_vec(vec![w])).unwrap();
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(1.5);
        let mut st = AdamState::new(AdamConfig::default(), &s);
        s.by_name_mut("w").unwrap().accumulate_grad(&[0.0]);
        adam_step(&mut s, &mut st).unwrap();
        assert_eq!(s.by_name("w").unwrap().data(), &[1.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        for g in [0.3, -7.0] {
            let mut s = scalar_store(0.0);
            let mut st = AdamState::new(AdamConfig::default(), &s);
            s.by_name_mut("w").unwrap().accumulate_grad(&[g]);
            adam_step(&mut s, &mut st).unwrap();
            let w = s.by_name("w").unwrap().data()[0];
            assert!((w + 1e-3 * g.signum()).abs() < 1e-8);
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(AdamConfig { lr: 0.1, ..AdamConfig::default() }, &s);
        for _ in 0..100 {
            let w = s.by_name("w").unwrap().data()[0];
            s.zero_grad();
            s.by_name_mut("w").unwrap().accumulate_grad(&[2.0 * (w - 3.0)]);
            adam_step(&mut s, &mut st).unwrap();
        }
        assert!((s.by_name("w").unwrap().data()[0] - 3.0).abs() < 0.5);
    }

    #[test]
    fn missing_gradient_names_tensor() {
        let mut s = scalar_store(0.0);
        s.insert("other", Tensor::from_vec(vec![1.0])).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), &s);
        s.by_name_mut("w").unwrap().accumulate_grad(&[1.0]);
        match adam_step(&mut s, &mut st) {
            Err(Error::MissingGradient(name)) => assert_eq!(name, "other"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.by_name("w").unwrap().data(), &[0.0]);
        st.freeze("other");
        adam_step(&mut s, &mut st).unwrap();
        assert_eq!(s.by_name("other").unwrap().data(), &[1.0]);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut s = ParamStore::new();
        s.insert("a", Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        s.by_name_mut("a").unwrap().accumulate_grad(&[3.0, 4.0]);
        assert_eq!(clip_grad_norm(&mut s, 1.0), 5.0);
        let g = s.by_name("a").unwrap().grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }
}
