//! Differentiable building blocks: dense stacks, the GRU cell, Gaussian
//! reparameterization, and the two losses the model needs.

use rand::Rng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{log_sum_exp, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{Rng, Stream};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    None,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Softplus => tape.softplus(x),
            Activation::None => x,
        }
    }
}

/// Fully connected layer `y = x W + b` with `W: in x out`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

pub(crate) fn uniform_tensor(shape: Vec<usize>, bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape and data agree")
}

impl Linear {
    /// Registers `{name}.weight` and `{name}.bias`, drawn from U(-1/sqrt(in), 1/sqrt(in)).
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!("layer `{name}` has a zero dimension ({in_dim} -> {out_dim})")));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let weight = store.insert(format!("{name}.weight"), uniform_tensor(vec![in_dim, out_dim], bound, rng))?;
        let bias = store.insert(format!("{name}.bias"), uniform_tensor(vec![out_dim], bound, rng))?;
        Ok(Self { weight, bias, in_dim, out_dim })
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.linear(x, w, b)
    }

    pub fn num_scalars(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// A stack of dense layers with one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activations: Vec<Activation>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... ` with `activation` after every layer.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config(format!("stack `{name}` needs at least two widths")));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<Vec<_>>>()?;
        let activations = vec![activation; layers.len()];
        Ok(Self { layers, activations })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        mlp_forward(tape, store, x, &self.layers, &self.activations)
    }
}

/// Runs `input` through `stack`, applying `activations[i]` after layer `i`.
pub fn mlp_forward(
    tape: &mut Tape,
    store: &ParamStore,
    input: Var,
    stack: &[Linear],
    activations: &[Activation],
) -> Result<Var> {
    if stack.len() != activations.len() {
        return Err(Error::Config(format!(
            "{} layers but {} activation tags",
            stack.len(),
            activations.len()
        )));
    }
    let mut x = input;
    for (i, (layer, act)) in stack.iter().zip(activations).enumerate() {
        let width = tape.shape(x).1;
        if width != layer.in_dim {
            return Err(Error::Config(format!(
                "layer {i} expects width {} but receives {width}",
                layer.in_dim
            )));
        }
        let y = layer.forward(tape, store, x)?;
        x = act.apply(tape, y);
    }
    Ok(x)
}

/// Weights of a single-layer GRU, gate layout as in the common
/// `r, z, n` formulation with separate input and hidden biases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GruWeights {
    pub input_dim: usize,
    pub hidden_dim: usize,
    input: [Linear; 3],
    hidden: [Linear; 3],
}

impl GruWeights {
    pub fn new(store: &mut ParamStore, name: &str, input_dim: usize, hidden_dim: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut make = |kind: &str, gate: &str, in_dim: usize| -> Result<Linear> {
            let w = store.insert(
                format!("{name}.w_{kind}{gate}"),
                uniform_tensor(vec![in_dim, hidden_dim], bound, rng),
            )?;
            let b = store.insert(format!("{name}.b_{kind}{gate}"), uniform_tensor(vec![hidden_dim], bound, rng))?;
            Ok(Linear { weight: w, bias: b, in_dim, out_dim: hidden_dim })
        };
        let input = [make("i", "r", input_dim)?, make("i", "z", input_dim)?, make("i", "n", input_dim)?];
        let hidden = [make("h", "r", hidden_dim)?, make("h", "z", hidden_dim)?, make("h", "n", hidden_dim)?];
        Ok(Self { input_dim, hidden_dim, input, hidden })
    }

    pub fn num_scalars(&self) -> usize {
        self.input.iter().chain(&self.hidden).map(Linear::num_scalars).sum()
    }
}

/// One GRU update:
///
/// ```text
/// r  = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
/// u  = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
/// n  = tanh(x W_in + b_in + r * (h W_hn + b_hn))
/// h' = (1 - u) * n + u * h
/// ```
pub fn gru_cell(tape: &mut Tape, store: &ParamStore, input: Var, h_prev: Var, w: &GruWeights) -> Result<Var> {
    let (xr, xc) = tape.shape(input);
    let (hr, hc) = tape.shape(h_prev);
    if xc != w.input_dim || hc != w.hidden_dim || xr != hr {
        return Err(Error::shape(
            "gru_cell",
            format!(
                "input {xr}x{xc}, hidden {hr}x{hc}, weights expect {} / {}",
                w.input_dim, w.hidden_dim
            ),
        ));
    }
    let [ir, iz, inn] = &w.input;
    let [hr_, hz, hn] = &w.hidden;
    let gate = |tape: &mut Tape, a: &Linear, b: &Linear| -> Result<Var> {
        let xa = a.forward(tape, store, input)?;
        let hb = b.forward(tape, store, h_prev)?;
        let s = tape.add(xa, hb)?;
        Ok(tape.sigmoid(s))
    };
    let r = gate(tape, ir, hr_)?;
    let u = gate(tape, iz, hz)?;
    let xn = inn.forward(tape, store, input)?;
    let hn_ = hn.forward(tape, store, h_prev)?;
    let rh = tape.mul(r, hn_)?;
    let pre = tape.add(xn, rh)?;
    let n = tape.tanh(pre);
    let diff = tape.sub(h_prev, n)?;
    let ud = tape.mul(u, diff)?;
    tape.add(n, ud)
}

/// Diagonal Gaussian parameters as plain values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let g = Self { mu, sigma };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu.len() != self.sigma.len() {
            return Err(Error::shape(
                "GaussianParams",
                format!("mu has {} entries, sigma {}", self.mu.len(), self.sigma.len()),
            ));
        }
        if let Some(s) = self.sigma.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::Invariant(format!("sigma must be strictly positive, got {s}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Diagonal Gaussian parameters living on a tape (one distribution per row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianVars {
    pub mu: Var,
    pub sigma: Var,
}

impl GaussianVars {
    pub fn constant(tape: &mut Tape, g: &GaussianParams) -> Result<Self> {
        g.validate()?;
        let n = g.dim();
        Ok(Self { mu: tape.constant(1, n, g.mu.clone())?, sigma: tape.constant(1, n, g.sigma.clone())? })
    }

    /// Reads row `r` back as plain values.
    pub fn row(&self, tape: &Tape, r: usize) -> GaussianParams {
        GaussianParams { mu: tape.row(self.mu, r).to_vec(), sigma: tape.row(self.sigma, r).to_vec() }
    }
}

/// `z = mu + sigma * eps`, `eps ~ N(0, I)` from the latent stream. Gradient
/// reaches `mu` and `sigma`; `eps` is a constant.
pub fn reparameterize(tape: &mut Tape, g: GaussianVars, rng: &mut Rng) -> Result<Var> {
    let (r, c) = tape.shape(g.mu);
    if tape.shape(g.sigma) != (r, c) {
        return Err(Error::shape("reparameterize", "mu and sigma shapes differ"));
    }
    if let Some(s) = tape.value(g.sigma).iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Invariant(format!("reparameterize needs sigma > 0, got {s}")));
    }
    let eps = tape.constant(r, c, rng.normal(Stream::Latent, r * c))?;
    let scaled = tape.mul(g.sigma, eps)?;
    tape.add(g.mu, scaled)
}

/// Per-row diagonal KL(q || p) on the tape.
pub fn kl_gaussians_var(tape: &mut Tape, q: GaussianVars, p: GaussianVars) -> Result<Var> {
    tape.kl_diag(q.mu, q.sigma, p.mu, p.sigma)
}

/// Closed-form KL(q || p) between diagonal Gaussians.
pub fn kl_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    q.validate()?;
    p.validate()?;
    if q.dim() != p.dim() {
        return Err(Error::shape("kl_gaussians", format!("{} vs {} dims", q.dim(), p.dim())));
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let d = q.mu[i] - p.mu[i];
        let vp = p.sigma[i] * p.sigma[i];
        kl += (p.sigma[i] / q.sigma[i]).ln() + (q.sigma[i] * q.sigma[i] + d * d) / (2.0 * vp) - 0.5;
    }
    Ok(kl)
}

/// Overflow-safe softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|x| x - lse).collect()
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy_from_logits(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::OutOfRange { what: "class logits", index: target, size: logits.len() });
    }
    Ok(log_sum_exp(logits) - logits[target])
}
