//! Central finite-difference verification of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Check a random subsample of this many elements (at least 200);
    /// `None` checks every element.
    pub max_elements: Option<usize>,
    pub seed: u64,
    pub corrupt_backward: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, tolerance: 1e-4, max_elements: None, seed: 0, corrupt_backward: false }
    }
}

impl GradCheckOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self { tolerance, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElementError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub worst: Option<ElementError>,
    /// Worst relative error per parameter tensor, in store order.
    pub per_param: Vec<(String, f64)>,
    pub passed: bool,
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares the analytic gradient of the scalar built by `loss` against
/// central differences over the parameters in `store`.
///
/// `loss` must be a pure function of the store: any randomness it uses has
/// to be re-seeded on every call.
pub fn check_gradient<F>(store: &mut ParamStore, mut loss: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    tape.set_corrupt_backward(opts.corrupt_backward);
    let out = loss(&mut tape, store)?;
    let (r, c) = tape.shape(out);
    if (r, c) != (1, 1) {
        return Err(Error::NonScalarOutput { rows: r, cols: c });
    }
    store.zero_grad();
    tape.backward_into(out, store)?;
    drop(tape);

    let analytic: Vec<Vec<f64>> = store
        .iter()
        .map(|(_, _, t)| t.grad().map_or_else(|| vec![0.0; t.len()], <[f64]>::to_vec))
        .collect();
    let mut elements: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(p, g)| (0..g.len()).map(move |i| (p, i)))
        .collect();
    if let Some(m) = opts.max_elements {
        let m = m.max(200);
        if elements.len() > m {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked = sample(&mut rng, elements.len(), m).into_vec();
            picked.sort_unstable();
            elements = picked.into_iter().map(|k| elements[k]).collect();
        }
    }

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let o = loss(&mut t, store)?;
        Ok(t.scalar(o))
    };
    let mut per_param = vec![0.0f64; store.len()];
    let mut worst: Option<ElementError> = None;
    for &(p, i) in &elements {
        let id = ParamId(p);
        let orig = store.get(id).data()[i];
        store.get_mut(id).data_mut()[i] = orig + opts.step;
        let plus = eval(store)?;
        store.get_mut(id).data_mut()[i] = orig - opts.step;
        let minus = eval(store)?;
        store.get_mut(id).data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * opts.step);
        let a = analytic[p][i];
        let err = relative_error(a, numeric);
        per_param[p] = per_param[p].max(err);
        if worst.as_ref().map_or(true, |w| err > w.rel_err) {
            worst = Some(ElementError { param: store.name(id).to_string(), index: i, analytic: a, numeric, rel_err: err });
        }
    }
    let max_rel_err = worst.as_ref().map_or(0.0, |w| w.rel_err);
    Ok(GradCheckReport {
        checked: elements.len(),
        tolerance: opts.tolerance,
        max_rel_err,
        passed: max_rel_err < opts.tolerance && max_rel_err.is_finite(),
        per_param: store.iter().map(|(id, n, _)| (n.to_string(), per_param[id.index()])).collect(),
        worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn regression_store() -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(vec![3, 1], vec![0.4, -0.7, 1.3]).unwrap()).unwrap();
        s.insert("b", Tensor::new(vec![1], vec![0.1]).unwrap()).unwrap();
        s
    }

    fn regression_loss(tape: &mut Tape, s: &ParamStore) -> Result<Var> {
        let x = tape.constant(4, 3, vec![1., 2., 3., -1., 0.5, 2., 0., 1., -1., 3., 3., 0.])?;
        let y = tape.constant(4, 1, vec![1.0, -2.0, 0.5, 4.0])?;
        let w = tape.param(s, s.id("w").unwrap());
        let b = tape.param(s, s.id("b").unwrap());
        let pred = tape.linear(x, w, b)?;
        let r = tape.sub(pred, y)?;
        let sq = tape.mul(r, r)?;
        tape.sum(sq)
    }

    #[test]
    fn linear_regression_passes() {
        let mut s = regression_store();
        let rep = check_gradient(&mut s, regression_loss, &GradCheckOptions::with_tolerance(1e-6)).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert_eq!(rep.checked, 4);
    }

    #[test]
    fn corrupted_backward_fails() {
        let mut s = regression_store();
        let opts = GradCheckOptions { corrupt_backward: true, ..GradCheckOptions::with_tolerance(1e-6) };
        let rep = check_gradient(&mut s, regression_loss, &opts).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn non_scalar_output_rejected() {
        let mut s = regression_store();
        let r = check_gradient(
            &mut s,
            |t, s| {
                let w = t.param(s, s.id("w").unwrap());
                Ok(w)
            },
            &GradCheckOptions::default(),
        );
        assert!(matches!(r, Err(Error::NonScalarOutput { rows: 3, cols: 1 })));
    }

    #[test]
    fn relative_error_guards_zero() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}
