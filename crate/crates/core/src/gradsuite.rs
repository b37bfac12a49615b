//! Finite-difference checks of every tape primitive and of the full model
//! objective on a tiny configuration.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{Tape, Var};
use crate::data::pad_sequence;
use crate::error::Result;
use crate::gradcheck::{check_gradient, GradCheckOptions};
use crate::model::{CatVrnn, InitMode, ModelConfig, Phase};
use crate::nn::{gru_cell, reparameterize, GaussianVars, GruWeights};
use crate::rng::Rng;
use crate::tensor::{ParamStore, Tensor};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: Option<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub entries: Vec<SuiteEntry>,
    pub passed: bool,
}

type LossFn = Box<dyn Fn(&mut Tape, &ParamStore) -> Result<Var>>;

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::new(vec![rows, cols], data).expect("consistent shape")
}

/// Fixed random weights for the final reduction, so every output element
/// receives a distinct adjoint.
fn reduce(tape: &mut Tape, v: Var) -> Result<Var> {
    let (r, c) = tape.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = tape.constant(c, 1, (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let col = tape.matmul(v, w)?;
    let weights: Vec<f64> = (0..r).map(|_| rng.gen_range(0.5..1.5)).collect();
    tape.weighted_sum(col, &weights)
}

fn primitive_cases() -> Result<Vec<(&'static str, ParamStore, LossFn)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases: Vec<(&'static str, ParamStore, LossFn)> = Vec::new();
    let store2 = |rng: &mut ChaCha8Rng, a: (usize, usize), b: (usize, usize)| -> Result<ParamStore> {
        let mut s = ParamStore::new();
        s.insert("a", random_tensor(rng, a.0, a.1, -1.0, 1.0))?;
        s.insert("b", random_tensor(rng, b.0, b.1, -1.0, 1.0))?;
        Ok(s)
    };
    fn ab(tape: &mut Tape, s: &ParamStore) -> (Var, Var) {
        let a = tape.param(s, s.id("a").expect("a"));
        let b = tape.param(s, s.id("b").expect("b"));
        (a, b)
    }
    cases.push(("matmul", store2(&mut rng, (3, 4), (4, 2))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let y = t.matmul(a, b)?;
        reduce(t, y)
    })));
    cases.push(("add_bias", store2(&mut rng, (3, 4), (1, 4))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let y = t.add_bias(a, b)?;
        reduce(t, y)
    })));
    cases.push(("add", store2(&mut rng, (3, 4), (3, 4))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let y = t.add(a, b)?;
        reduce(t, y)
    })));
    cases.push(("sub", store2(&mut rng, (3, 4), (3, 4))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let y = t.sub(a, b)?;
        reduce(t, y)
    })));
    cases.push(("mul", store2(&mut rng, (3, 4), (3, 4))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let y = t.mul(a, b)?;
        reduce(t, y)
    })));
    cases.push(("affine", store2(&mut rng, (3, 4), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.affine(a, -1.7, 0.3);
        reduce(t, y)
    })));
    cases.push(("relu", store2(&mut rng, (4, 5), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.relu(a);
        reduce(t, y)
    })));
    cases.push(("softplus", store2(&mut rng, (4, 5), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.softplus(a);
        reduce(t, y)
    })));
    cases.push(("sigmoid", store2(&mut rng, (4, 5), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.sigmoid(a);
        reduce(t, y)
    })));
    cases.push(("tanh", store2(&mut rng, (4, 5), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.tanh(a);
        reduce(t, y)
    })));
    cases.push(("concat", store2(&mut rng, (3, 2), (3, 4))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let y = t.concat(&[a, b, a])?;
        reduce(t, y)
    })));
    cases.push(("gather", store2(&mut rng, (5, 3), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.gather(a, &[4, 0, 4, 2])?;
        reduce(t, y)
    })));
    cases.push(("cross_entropy", store2(&mut rng, (4, 6), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.cross_entropy(a, &[0, 5, 2, 2])?;
        reduce(t, y)
    })));
    cases.push(("kl_diag", store2(&mut rng, (3, 4), (3, 4))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let sq = t.softplus(b);
        let sp = t.affine(a, 0.0, 0.7);
        let sp = t.add(sp, sq)?;
        let y = t.kl_diag(a, sq, b, sp)?;
        reduce(t, y)
    })));
    cases.push(("unfold", store2(&mut rng, (10, 3), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.unfold(a, 5, 3)?;
        reduce(t, y)
    })));
    cases.push(("group_max", store2(&mut rng, (8, 3), (1, 1))?, Box::new(|t, s| {
        let (a, _) = ab(t, s);
        let y = t.group_max(a, 4)?;
        reduce(t, y)
    })));
    {
        let mut s = store2(&mut rng, (3, 5), (3, 4))?;
        let weights = GruWeights::new(&mut s, "gru", 5, 4, &mut rng)?;
        cases.push(("gru_cell", s, Box::new(move |t, s| {
            let (a, b) = ab(t, s);
            let h = gru_cell(t, s, a, b, &weights)?;
            reduce(t, h)
        })));
    }
    cases.push(("reparameterize", store2(&mut rng, (3, 4), (3, 4))?, Box::new(|t, s| {
        let (a, b) = ab(t, s);
        let sigma = t.softplus(b);
        let z = reparameterize(t, GaussianVars { mu: a, sigma }, &mut Rng::new(3))?;
        reduce(t, z)
    })));
    Ok(cases)
}

/// Tiny configuration used by the model-level checks: `|V| = 12`,
/// embedding 8, hidden 6, latent 4, `T = 5`.
pub fn tiny_model(init: InitMode, use_kl_term: bool, seed: u64) -> Result<CatVrnn> {
    let cfg = ModelConfig { init_mode: init, use_kl_term, ..ModelConfig::tiny(12, 2) };
    let mut model = CatVrnn::new(cfg, seed)?;
    // Learned initializer vectors start at zero; move them off it so the
    // check exercises non-trivial values.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in ["init.omega", "init.bias"] {
        if let Some(t) = model.params_mut().by_name_mut(name) {
            t.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
    }
    Ok(model)
}

fn model_case(init: InitMode, kl: bool, opts: &GradCheckOptions) -> Result<SuiteEntry> {
    let model = tiny_model(init, kl, opts.seed)?;
    let t = model.config().max_len;
    let rows = [vec![3, 7, 4], vec![9, 2, 11, 5], vec![6]];
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for r in &rows {
        let (i, o) = pad_sequence(r, t)?;
        inputs.push(i);
        targets.push(o);
    }
    let cats = vec![0, 1, 1];
    let mut params = model.params().clone();
    let seed = opts.seed;
    let report = check_gradient(
        &mut params,
        |tape, store| {
            let m = model.with_params(store.clone())?;
            Ok(m.batch_loss(tape, &inputs, &targets, &cats, Phase::Train, &mut Rng::new(seed))?.total)
        },
        opts,
    )?;
    let mode = match init {
        InitMode::None => "zero",
        InitMode::Static => "static",
        InitMode::Adaptive => "adaptive",
    };
    Ok(SuiteEntry {
        name: format!("model[{mode},kl={}]", if kl { "on" } else { "off" }),
        checked: report.checked,
        max_rel_err: report.max_rel_err,
        worst_param: report.worst.map(|w| w.param),
        passed: report.passed,
    })
}

/// Runs the primitive checks followed by the full T-step joint loss for
/// every initializer with the KL term off and on.
pub fn run_suite(opts: &GradCheckOptions) -> Result<SuiteReport> {
    let mut entries = Vec::new();
    for (name, mut store, loss) in primitive_cases()? {
        let r = check_gradient(&mut store, |t, s| loss(t, s), opts)?;
        entries.push(SuiteEntry {
            name: name.to_string(),
            checked: r.checked,
            max_rel_err: r.max_rel_err,
            worst_param: r.worst.map(|w| w.param),
            passed: r.passed,
        });
    }
    for init in [InitMode::None, InitMode::Static, InitMode::Adaptive] {
        for kl in [false, true] {
            entries.push(model_case(init, kl, opts)?);
        }
    }
    let passed = entries.iter().all(|e| e.passed);
    Ok(SuiteReport { tolerance: opts.tolerance, entries, passed })
}
