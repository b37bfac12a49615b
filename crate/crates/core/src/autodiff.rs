//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every value on the tape is a row-major `rows x cols` matrix; a batch of
//! vectors is a matrix with one vector per row. Operations append a node
//! holding the forward value and enough context to run the adjoint, and
//! [`Tape::backward`] walks the nodes in reverse.

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    Softplus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    KlDiag { mu_q: Var, sigma_q: Var, mu_p: Var, sigma_p: Var },
    WeightedSum(Var, Vec<f64>),
    Unfold { input: Var, seq_len: usize, width: usize },
    GroupMax { input: Var, argmax: Vec<usize> },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Records operations for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
    corrupt_backward: bool,
}

/// Adjoints produced by [`Tape::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Debug switch that deliberately breaks the matmul adjoint. Used as a
    /// negative control for gradient checking.
    pub fn set_corrupt_backward(&mut self, on: bool) {
        self.corrupt_backward = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Param => true,
            Op::MatMul(a, b) | Op::AddBias(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.req(*a) || self.req(*b)
            }
            Op::Affine(a, _)
            | Op::Relu(a)
            | Op::Softplus(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Gather(a, _)
            | Op::WeightedSum(a, _) => self.req(*a),
            Op::Concat(xs) => xs.iter().any(|x| self.req(*x)),
            Op::CrossEntropy { logits, .. } => self.req(*logits),
            Op::KlDiag { mu_q, sigma_q, mu_p, sigma_p } => {
                [mu_q, sigma_q, mu_p, sigma_p].iter().any(|v| self.req(**v))
            }
            Op::Unfold { input, .. } | Op::GroupMax { input, .. } => self.req(*input),
        };
        self.nodes.push(Node { rows, cols, value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn req(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// Row `r` of a node's value.
    pub fn row(&self, v: Var, r: usize) -> &[f64] {
        let n = self.node(v);
        &n.value[r * n.cols..(r + 1) * n.cols]
    }

    fn check_len(op: &'static str, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
        if rows == 0 || cols == 0 || rows * cols != data.len() {
            return Err(Error::shape(op, format!("{rows}x{cols} with {} values", data.len())));
        }
        Ok(())
    }

    /// A constant input; no gradient is propagated into it.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        Self::check_len("constant", rows, cols, &data)?;
        Ok(self.push(rows, cols, data, Op::Leaf))
    }

    /// An input whose gradient is tracked (readable through [`Gradients::get`]).
    pub fn variable(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        Self::check_len("variable", rows, cols, &data)?;
        let v = self.push(rows, cols, data, Op::Leaf);
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    /// Places a stored parameter on the tape. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.params.get(id.0) {
            return *v;
        }
        let t = store.get(id);
        let v = self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Param);
        if self.params.len() <= id.0 {
            self.params.resize(id.0 + 1, None);
        }
        self.params[id.0] = Some(v);
        v
    }

    /// Copy of `a` that blocks gradient flow.
    pub fn detach(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let value = self.value(a).to_vec();
        self.push(r, c, value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::shape("matmul", format!("{ar}x{ac} @ {br}x{bc}")));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut out = vec![0.0; ar * bc];
        for i in 0..ar {
            let orow = &mut out[i * bc..(i + 1) * bc];
            for p in 0..ac {
                let x = av[i * ac + p];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[p * bc..(p + 1) * bc];
                orow.iter_mut().zip(brow).for_each(|(o, w)| *o += x * w);
            }
        }
        Ok(self.push(ar, bc, out, Op::MatMul(a, b)))
    }

    /// `a + bias`, with the single-row `bias` broadcast down the rows of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(bias);
        if br != 1 || bc != ac {
            return Err(Error::shape("add_bias", format!("{ar}x{ac} + {br}x{bc}")));
        }
        let bv = self.value(bias).to_vec();
        let out: Vec<f64> = self
            .value(a)
            .chunks(ac)
            .flat_map(|row| row.iter().zip(&bv).map(|(x, b)| x + b))
            .collect();
        Ok(self.push(ar, ac, out, Op::AddBias(a, bias)))
    }

    /// `x @ w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (r, c) = self.same_shape(name, a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| f(*x, *y)).collect();
        Ok(self.push(r, c, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// `scale * a + shift`, elementwise.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        self.map(a, Op::Affine(a, scale), |x| scale * x + shift)
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        self.push(r, c, out, op)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.map(a, Op::Softplus(a), softplus)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    /// Column-wise concatenation; all parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(Error::shape("concat", "no inputs"));
        };
        let rows = self.shape(*first).0;
        if let Some(bad) = parts.iter().find(|p| self.shape(**p).0 != rows) {
            return Err(Error::shape("concat", format!("row count {} vs {rows}", self.shape(*bad).0)));
        }
        let cols: usize = parts.iter().map(|p| self.shape(*p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                out.extend_from_slice(self.row(*p, r));
            }
        }
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec())))
    }

    /// Selects rows of `table` (an embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (tr, tc) = self.shape(table);
        if ids.is_empty() {
            return Err(Error::shape("gather", "no indices"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= tr) {
            return Err(Error::OutOfRange { what: "embedding table", index: bad, size: tr });
        }
        let mut out = Vec::with_capacity(ids.len() * tc);
        for &i in ids {
            out.extend_from_slice(self.row(table, i));
        }
        Ok(self.push(ids.len(), tc, out, Op::Gather(table, ids.to_vec())))
    }

    /// Per-row `-log softmax(logits)[target]`, as a `rows x 1` column.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(Error::shape("cross_entropy", format!("{r} rows, {} targets", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::OutOfRange { what: "class logits", index: bad, size: c });
        }
        let mut probs = Vec::with_capacity(r * c);
        let mut losses = Vec::with_capacity(r);
        for (row, &t) in self.value(logits).chunks(c).zip(targets) {
            let lse = log_sum_exp(row);
            probs.extend(row.iter().map(|x| (x - lse).exp()));
            losses.push(lse - row[t]);
        }
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), probs };
        Ok(self.push(r, 1, losses, op))
    }

    /// Per-row KL(q || p) between diagonal Gaussians, as a `rows x 1` column.
    pub fn kl_diag(&mut self, mu_q: Var, sigma_q: Var, mu_p: Var, sigma_p: Var) -> Result<Var> {
        let (r, c) = self.same_shape("kl_diag", mu_q, sigma_q)?;
        self.same_shape("kl_diag", mu_q, mu_p)?;
        self.same_shape("kl_diag", mu_q, sigma_p)?;
        let (mq, sq, mp, sp) = (self.value(mu_q), self.value(sigma_q), self.value(mu_p), self.value(sigma_p));
        if sq.iter().chain(sp).any(|&s| !(s > 0.0)) {
            return Err(Error::Invariant("kl_diag requires strictly positive sigma".into()));
        }
        let mut out = Vec::with_capacity(r);
        for i in 0..r {
            let mut acc = 0.0;
            for j in i * c..(i + 1) * c {
                let d = mq[j] - mp[j];
                acc += (sp[j] / sq[j]).ln() + (sq[j] * sq[j] + d * d) / (2.0 * sp[j] * sp[j]) - 0.5;
            }
            out.push(acc);
        }
        Ok(self.push(r, 1, out, Op::KlDiag { mu_q, sigma_q, mu_p, sigma_p }))
    }

    /// `sum_{i,j} weights[i] * a[i][j]`, a `1 x 1` scalar.
    pub fn weighted_sum(&mut self, a: Var, weights: &[f64]) -> Result<Var> {
        let (r, c) = self.shape(a);
        if weights.len() != r {
            return Err(Error::shape("weighted_sum", format!("{r} rows, {} weights", weights.len())));
        }
        let total = self.value(a).chunks(c).zip(weights).map(|(row, w)| w * row.iter().sum::<f64>()).sum();
        Ok(self.push(1, 1, vec![total], Op::WeightedSum(a, weights.to_vec())))
    }

    /// Sum of all elements.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let r = self.shape(a).0;
        self.weighted_sum(a, &vec![1.0; r])
    }

    /// Sliding windows over stacked sequences.
    ///
    /// `input` holds `n` sequences of `seq_len` rows each. The output holds,
    /// for every sequence, its `seq_len - width + 1` windows, each flattened
    /// into one row of `width * cols` values.
    pub fn unfold(&mut self, input: Var, seq_len: usize, width: usize) -> Result<Var> {
        let (r, c) = self.shape(input);
        if seq_len == 0 || width == 0 || width > seq_len || r % seq_len != 0 {
            return Err(Error::shape("unfold", format!("{r} rows, seq_len {seq_len}, width {width}")));
        }
        let n = r / seq_len;
        let win = seq_len - width + 1;
        let v = self.value(input);
        let mut out = Vec::with_capacity(n * win * width * c);
        for s in 0..n {
            for t in 0..win {
                let start = (s * seq_len + t) * c;
                out.extend_from_slice(&v[start..start + width * c]);
            }
        }
        Ok(self.push(n * win, width * c, out, Op::Unfold { input, seq_len, width }))
    }

    /// Column-wise max over consecutive groups of `group` rows.
    pub fn group_max(&mut self, input: Var, group: usize) -> Result<Var> {
        let (r, c) = self.shape(input);
        if group == 0 || r % group != 0 {
            return Err(Error::shape("group_max", format!("{r} rows, group {group}")));
        }
        let n = r / group;
        let v = self.value(input);
        let mut out = Vec::with_capacity(n * c);
        let mut argmax = Vec::with_capacity(n * c);
        for g in 0..n {
            for j in 0..c {
                let mut best = g * group * c + j;
                for t in 1..group {
                    let idx = (g * group + t) * c + j;
                    if v[idx] > v[best] {
                        best = idx;
                    }
                }
                out.push(v[best]);
                argmax.push(best);
            }
        }
        Ok(self.push(n, c, out, Op::GroupMax { input, argmax }))
    }

    /// Reverse pass from a `1 x 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let (r, c) = self.shape(output);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarOutput { rows: r, cols: c });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Tape::backward`] and adds the parameter adjoints into `store`.
    pub fn backward_into(&self, output: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.backward(output)?;
        for (idx, v) in self.params.iter().enumerate() {
            if let Some(v) = v {
                if let Some(g) = grads.get(*v) {
                    store.get_mut(ParamId(idx)).accumulate_grad(g);
                }
            }
        }
        Ok(grads)
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let cols = node.cols;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (ar, ac) = self.shape(*a);
                let bc = cols;
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.req(*a) {
                    let mut da = vec![0.0; ar * ac];
                    for i in 0..ar {
                        let grow = &g[i * bc..(i + 1) * bc];
                        for p in 0..ac {
                            let brow = &bv[p * bc..(p + 1) * bc];
                            da[i * ac + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    add_into(&mut grads[a.0], &da);
                }
                if self.req(*b) {
                    let mut db = vec![0.0; ac * bc];
                    for i in 0..ar {
                        let grow = &g[i * bc..(i + 1) * bc];
                        for p in 0..ac {
                            let x = av[i * ac + p];
                            if x == 0.0 {
                                continue;
                            }
                            db[p * bc..(p + 1) * bc].iter_mut().zip(grow).for_each(|(d, y)| *d += x * y);
                        }
                    }
                    if self.corrupt_backward {
                        db.iter_mut().for_each(|d| *d *= 1.5);
                    }
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::AddBias(a, b) => {
                if self.req(*a) {
                    add_into(&mut grads[a.0], g);
                }
                if self.req(*b) {
                    let mut db = vec![0.0; cols];
                    for row in g.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                    }
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if self.req(*v) {
                        add_into(&mut grads[v.0], g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.req(*a) {
                    add_into(&mut grads[a.0], g);
                }
                if self.req(*b) {
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    add_into(&mut grads[b.0], &neg);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.req(*a) {
                    let da: Vec<f64> = g.iter().zip(bv).map(|(x, y)| x * y).collect();
                    add_into(&mut grads[a.0], &da);
                }
                if self.req(*b) {
                    let db: Vec<f64> = g.iter().zip(av).map(|(x, y)| x * y).collect();
                    add_into(&mut grads[b.0], &db);
                }
            }
            Op::Affine(a, scale) => {
                let da: Vec<f64> = g.iter().map(|x| x * scale).collect();
                add_into(&mut grads[a.0], &da);
            }
            Op::Relu(a) => {
                let da: Vec<f64> = g
                    .iter()
                    .zip(self.value(*a))
                    .map(|(x, &v)| if v > 0.0 { *x } else { 0.0 })
                    .collect();
                add_into(&mut grads[a.0], &da);
            }
            Op::Softplus(a) => {
                let da: Vec<f64> = g.iter().zip(self.value(*a)).map(|(x, &v)| x * sigmoid(v)).collect();
                add_into(&mut grads[a.0], &da);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = g.iter().zip(&node.value).map(|(x, &y)| x * y * (1.0 - y)).collect();
                add_into(&mut grads[a.0], &da);
            }
            Op::Tanh(a) => {
                let da: Vec<f64> = g.iter().zip(&node.value).map(|(x, &y)| x * (1.0 - y * y)).collect();
                add_into(&mut grads[a.0], &da);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let pc = self.shape(*p).1;
                    if self.req(*p) {
                        let dp: Vec<f64> = g
                            .chunks(cols)
                            .flat_map(|row| row[offset..offset + pc].iter().copied())
                            .collect();
                        add_into(&mut grads[p.0], &dp);
                    }
                    offset += pc;
                }
            }
            Op::Gather(table, ids) => {
                let (tr, tc) = self.shape(*table);
                let dst = grads[table.0].get_or_insert_with(|| vec![0.0; tr * tc]);
                for (row, &i) in g.chunks(tc).zip(ids) {
                    dst[i * tc..(i + 1) * tc].iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let c = self.shape(*logits).1;
                let mut dl = probs.clone();
                for (r, (&t, &gr)) in targets.iter().zip(g).enumerate() {
                    let row = &mut dl[r * c..(r + 1) * c];
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|x| *x *= gr);
                }
                add_into(&mut grads[logits.0], &dl);
            }
            Op::KlDiag { mu_q, sigma_q, mu_p, sigma_p } => {
                let c = self.shape(*mu_q).1;
                let (mq, sq, mp, sp) =
                    (self.value(*mu_q), self.value(*sigma_q), self.value(*mu_p), self.value(*sigma_p));
                let n = mq.len();
                let (mut dmq, mut dsq, mut dmp, mut dsp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
                for j in 0..n {
                    let gr = g[j / c];
                    let d = mq[j] - mp[j];
                    let vp = sp[j] * sp[j];
                    dmq[j] = gr * d / vp;
                    dmp[j] = -gr * d / vp;
                    dsq[j] = gr * (sq[j] / vp - 1.0 / sq[j]);
                    dsp[j] = gr * (1.0 / sp[j] - (sq[j] * sq[j] + d * d) / (vp * sp[j]));
                }
                for (v, d) in [(mu_q, dmq), (sigma_q, dsq), (mu_p, dmp), (sigma_p, dsp)] {
                    if self.req(*v) {
                        add_into(&mut grads[v.0], &d);
                    }
                }
            }
            Op::WeightedSum(a, weights) => {
                let (ar, ac) = self.shape(*a);
                let mut da = Vec::with_capacity(ar * ac);
                for w in weights {
                    da.extend(std::iter::repeat(g[0] * w).take(ac));
                }
                add_into(&mut grads[a.0], &da);
            }
            Op::Unfold { input, seq_len, width } => {
                let (ir, ic) = self.shape(*input);
                let win = seq_len - width + 1;
                let dst = grads[input.0].get_or_insert_with(|| vec![0.0; ir * ic]);
                for (k, row) in g.chunks(cols).enumerate() {
                    let (s, t) = (k / win, k % win);
                    let start = (s * seq_len + t) * ic;
                    dst[start..start + width * ic].iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
            }
            Op::GroupMax { input, argmax } => {
                let (ir, ic) = self.shape(*input);
                let dst = grads[input.0].get_or_insert_with(|| vec![0.0; ir * ic]);
                for (&idx, x) in argmax.iter().zip(g) {
                    dst[idx] += x;
                }
            }
        }
    }
}

/// Overflow-safe `log(sum(exp(x)))`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}
