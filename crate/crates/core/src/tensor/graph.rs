//! Reverse-mode automatic differentiation over an append-only node arena.
//!
//! Nodes are pushed in evaluation order, so the arena index order is a
//! topological order of the computation. [`Graph::backward`] walks it once
//! in reverse, visiting each node exactly once.
//!
//! Everything is 2-D except where noted: sequences are `[len × features]`
//! matrices and there is no implicit broadcasting beyond adding a bias row
//! to every row of a matrix.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::dense::{log_softmax_rows, matmul_nn, matmul_nt, matmul_tn};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Layer-norm epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Relu(Var),
    Softmax { x: Var, axis: usize },
    LogSoftmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Embedding { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    Sum(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<f64> },
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// A recorded computation.
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<(u64, usize, bool), Var>,
    param_leaves: Vec<(u64, ParamId, Var)>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::with_capacity(256),
            params: HashMap::new(),
            param_leaves: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.push_shared(Arc::new(value), op, requires_grad)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A free leaf that receives a gradient (not tied to any store).
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a stored parameter. Repeated binds of the same parameter in
    /// the same mode return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId, trainable: bool) -> Var {
        let key = (store.tag(), id.0, trainable);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push_shared(store.shared(id), Op::Leaf, trainable);
        self.params.insert(key, v);
        if trainable {
            self.param_leaves.push((store.tag(), id, v));
        }
        v
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("{what} expects a matrix, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul_nt")?;
        let (n, k2) = self.dims2(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::Shape(format!("matmul_nt inner dims {k} vs {k2}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_nt(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMulNT(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose()?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_with(self.value(b), |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// Adds a length-`n` row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims2(a, "add_row")?;
        if self.value(row).len() != n {
            return Err(Error::Shape(format!(
                "add_row: row of {} values for {n} columns",
                self.value(row).len()
            )));
        }
        let r = self.value(row).data();
        let mut out = self.value(a).data().to_vec();
        for chunk in out.chunks_mut(n) {
            for (o, &b) in chunk.iter_mut().zip(r) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::AddRow(a, row), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let value = self.value(x).softmax(axis)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax { x, axis }, rg))
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let out = log_softmax_rows(t.data(), t.cols());
        let value = Tensor::from_parts(t.shape().to_vec(), out);
        let rg = self.rg(x);
        self.push(value, Op::LogSoftmax(x), rg)
    }

    /// Per-row layer normalisation followed by the affine `gamma ⊙ x̂ + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (m, n) = self.dims2(x, "layer_norm")?;
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(Error::Shape("layer_norm affine size mismatch".into()));
        }
        let xd = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &xd[i * n..(i + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[i] = r;
            for j in 0..n {
                let h = (row[j] - mean) * r;
                xhat[i * n + j] = h;
                out[i * n + j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            Tensor::from_parts(vec![m, n], out),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Gathers rows of a `vocab×d` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (vocab, d) = self.dims2(table, "embedding")?;
        if ids.is_empty() {
            return Err(Error::Shape("embedding of an empty id list".into()));
        }
        let t = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(Error::UnknownId(id));
            }
            out.extend_from_slice(t.row(id));
        }
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::from_parts(vec![ids.len(), d], out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Concatenates matrices with equal row counts along the feature axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.dims2(parts[0], "concat_cols")?.0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != m {
                return Err(Error::Shape(format!("concat_cols rows {r} vs {m}")));
            }
            total += c;
        }
        let mut out = vec![0.0; m * total];
        let mut off = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.cols();
            for i in 0..m {
                out[i * total + off..i * total + off + c].copy_from_slice(t.row(i));
            }
            off += c;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_parts(vec![m, total], out),
            Op::ConcatCols(parts.to_vec()),
            rg,
        ))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.dims2(parts[0], "concat_rows")?.1;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_rows")?;
            if c != n {
                return Err(Error::Shape(format!("concat_rows cols {c} vs {n}")));
            }
            rows += r;
            out.extend_from_slice(self.value(p).data());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::from_parts(vec![rows, n], out),
            Op::ConcatRows(parts.to_vec()),
            rg,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims2(x, "slice_cols")?;
        if len == 0 || start + len > n {
            return Err(Error::Shape(format!("slice_cols {start}+{len} of {n}")));
        }
        let t = self.value(x);
        let mut out = Vec::with_capacity(m * len);
        for i in 0..m {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_parts(vec![m, len], out),
            Op::SliceCols { x, start },
            rg,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.dims2(x, "slice_rows")?;
        if len == 0 || start + len > m {
            return Err(Error::Shape(format!("slice_rows {start}+{len} of {m}")));
        }
        let out = self.value(x).data()[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::from_parts(vec![len, n], out),
            Op::SliceRows { x, start },
            rg,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Summed negative log-likelihood of `targets[i]` under row `i` of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = self.dims2(logits, "cross_entropy")?;
        if targets.len() != m {
            return Err(Error::Shape(format!(
                "cross_entropy: {} targets for {m} rows",
                targets.len()
            )));
        }
        let logp = log_softmax_rows(self.value(logits).data(), n);
        let mut loss = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= n {
                return Err(Error::UnknownId(t));
            }
            loss -= logp[i * n + t];
        }
        let probs = logp.iter().map(|v| v.exp()).collect();
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q` is `Tq×d`, `k` and `v` are `Tk×d`; heads split the feature axis
    /// evenly. With `causal`, query `i` only sees keys `0..=i` (requires
    /// `Tq == Tk`).
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, causal: bool) -> Result<Var> {
        let (tq, d) = self.dims2(q, "attention")?;
        let (tk, dk_) = self.dims2(k, "attention")?;
        let (tv, dv) = self.dims2(v, "attention")?;
        if dk_ != d || dv != d || tv != tk {
            return Err(Error::Shape(format!(
                "attention shapes q {tq}x{d}, k {tk}x{dk_}, v {tv}x{dv}"
            )));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Shape(format!("{d} features not divisible by {heads} heads")));
        }
        if causal && tq != tk {
            return Err(Error::Shape("causal attention needs square scores".into()));
        }
        let hd = d / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut probs = vec![0.0; heads * tq * tk];
        let mut out = vec![0.0; tq * d];
        for h in 0..heads {
            let off = h * hd;
            let p = &mut probs[h * tq * tk..(h + 1) * tq * tk];
            for i in 0..tq {
                let qi = &qd[i * d + off..i * d + off + hd];
                let limit = if causal { i + 1 } else { tk };
                let mut max = f64::NEG_INFINITY;
                for j in 0..limit {
                    let kj = &kd[j * d + off..j * d + off + hd];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    p[i * tk + j] = s;
                    max = max.max(s);
                }
                let mut z = 0.0;
                for j in 0..limit {
                    let e = (p[i * tk + j] - max).exp();
                    p[i * tk + j] = e;
                    z += e;
                }
                for j in 0..limit {
                    p[i * tk + j] /= z;
                }
                let oi = &mut out[i * d + off..i * d + off + hd];
                for j in 0..limit {
                    let a = p[i * tk + j];
                    let vj = &vd[j * d + off..j * d + off + hd];
                    for (o, &x) in oi.iter_mut().zip(vj) {
                        *o += a * x;
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        Ok(self.push(
            Tensor::from_parts(vec![tq, d], out),
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            rg,
        ))
    }

    /// Attention weights of an attention node, laid out `heads×Tq×Tk`.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let mut params = HashMap::new();
        for &(tag, id, v) in &self.param_leaves {
            params.insert((tag, id.0), v);
        }
        Ok(Gradients { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Accumulates into `v`'s gradient through a closure over a zeroed
    /// buffer of `v`'s shape.
    fn accumulate_with(
        &self,
        grads: &mut [Option<Tensor>],
        v: Var,
        f: impl FnOnce(&mut [f64]),
    ) {
        if !self.rg(v) {
            return;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(self.value(v).shape()));
        }
        f(slot.as_mut().unwrap().data_mut());
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[1];
                let bd = self.value(*b).data();
                let ad = self.value(*a).data();
                self.accumulate_with(grads, *a, |ga| matmul_nt(gd, bd, ga, m, n, k));
                self.accumulate_with(grads, *b, |gb| matmul_tn(ad, gd, gb, m, k, n));
            }
            Op::MatMulNT(a, b) => {
                // c = a bᵀ: da = g b, db = gᵀ a
                let (m, k) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let n = self.value(*b).shape()[0];
                let bd = self.value(*b).data();
                let ad = self.value(*a).data();
                self.accumulate_with(grads, *a, |ga| matmul_nn(gd, bd, ga, m, n, k));
                self.accumulate_with(grads, *b, |gb| matmul_tn(gd, ad, gb, m, n, k));
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, g.transpose().expect("2-d gradient"));
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).clone();
                let bv = self.value(*b).clone();
                self.accumulate(grads, *a, g.zip_with(&bv, |x, y| x * y).unwrap());
                self.accumulate(grads, *b, g.zip_with(&av, |x, y| x * y).unwrap());
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(grads, *a, g.map(|x| x * c));
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                let n = g.cols();
                self.accumulate_with(grads, *row, |gr| {
                    for chunk in gd.chunks(n) {
                        for (o, &x) in gr.iter_mut().zip(chunk) {
                            *o += x;
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let av = self.value(*a);
                self.accumulate(
                    grads,
                    *a,
                    g.zip_with(av, |x, y| if y > 0.0 { x } else { 0.0 }).unwrap(),
                );
            }
            Op::Softmax { x, axis } => {
                let y = &node.value;
                let (outer, len, inner) = y.axis_split(*axis).unwrap();
                let yd = y.data();
                self.accumulate_with(grads, *x, |gx| {
                    for o in 0..outer {
                        for j in 0..inner {
                            let base = o * len * inner + j;
                            let dot: f64 = (0..len)
                                .map(|t| gd[base + t * inner] * yd[base + t * inner])
                                .sum();
                            for t in 0..len {
                                let idx = base + t * inner;
                                gx[idx] += yd[idx] * (gd[idx] - dot);
                            }
                        }
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let y = &node.value;
                let n = y.cols();
                let yd = y.data();
                self.accumulate_with(grads, *x, |gx| {
                    for ((gxr, gr), yr) in gx.chunks_mut(n).zip(gd.chunks(n)).zip(yd.chunks(n)) {
                        let s: f64 = gr.iter().sum();
                        for j in 0..n {
                            gxr[j] += gr[j] - yr[j].exp() * s;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = g.cols();
                let gam = self.value(*gamma).data();
                self.accumulate_with(grads, *gamma, |gg| {
                    for (gr, hr) in gd.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += gr[j] * hr[j];
                        }
                    }
                });
                self.accumulate_with(grads, *beta, |gb| {
                    for gr in gd.chunks(n) {
                        for j in 0..n {
                            gb[j] += gr[j];
                        }
                    }
                });
                self.accumulate_with(grads, *x, |gx| {
                    let nf = n as f64;
                    for (r, ((gxr, gr), hr)) in gx
                        .chunks_mut(n)
                        .zip(gd.chunks(n))
                        .zip(xhat.chunks(n))
                        .enumerate()
                    {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for j in 0..n {
                            let dh = gr[j] * gam[j];
                            s1 += dh;
                            s2 += dh * hr[j];
                        }
                        for j in 0..n {
                            let dh = gr[j] * gam[j];
                            gxr[j] += rstd[r] * (dh - s1 / nf - hr[j] * s2 / nf);
                        }
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let d = g.cols();
                self.accumulate_with(grads, *table, |gt| {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[id * d + j] += gd[r * d + j];
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let m = g.rows();
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    self.accumulate_with(grads, p, |gp| {
                        for r in 0..m {
                            for j in 0..c {
                                gp[r * c + j] += gd[r * total + off + j];
                            }
                        }
                    });
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    self.accumulate_with(grads, p, |gp| {
                        for (o, &x) in gp.iter_mut().zip(&gd[off..off + len]) {
                            *o += x;
                        }
                    });
                    off += len;
                }
            }
            Op::SliceCols { x, start } => {
                let n = self.value(*x).cols();
                let len = g.cols();
                let start = *start;
                self.accumulate_with(grads, *x, |gx| {
                    for (r, gr) in gd.chunks(len).enumerate() {
                        for j in 0..len {
                            gx[r * n + start + j] += gr[j];
                        }
                    }
                });
            }
            Op::SliceRows { x, start } => {
                let n = self.value(*x).cols();
                let start = *start;
                self.accumulate_with(grads, *x, |gx| {
                    for (o, &v) in gx[start * n..start * n + gd.len()].iter_mut().zip(gd) {
                        *o += v;
                    }
                });
            }
            Op::Sum(x) => {
                let s = gd[0];
                self.accumulate(grads, *x, Tensor::filled(self.value(*x).shape(), s));
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let s = gd[0];
                let n = self.value(*logits).cols();
                self.accumulate_with(grads, *logits, |gl| {
                    for (i, &t) in targets.iter().enumerate() {
                        for j in 0..n {
                            gl[i * n + j] += s * probs[i * n + j];
                        }
                        gl[i * n + t] -= s;
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => self.attention_backward(*q, *k, *v, *heads, probs, gd, grads),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: &[f64],
        gd: &[f64],
        grads: &mut [Option<Tensor>],
    ) {
        let (tq, d) = (self.value(q).shape()[0], self.value(q).shape()[1]);
        let tk = self.value(k).shape()[0];
        let hd = d / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut gq = vec![0.0; tq * d];
        let mut gk = vec![0.0; tk * d];
        let mut gv = vec![0.0; tk * d];
        let mut ds = vec![0.0; tk];
        for h in 0..heads {
            let off = h * hd;
            let p = &probs[h * tq * tk..(h + 1) * tq * tk];
            for i in 0..tq {
                let go = &gd[i * d + off..i * d + off + hd];
                // dP_ij = go · v_j ; dS = P ⊙ (dP - Σ dP ⊙ P)
                let mut dot = 0.0;
                for j in 0..tk {
                    let pij = p[i * tk + j];
                    if pij == 0.0 {
                        ds[j] = 0.0;
                        continue;
                    }
                    let vj = &vd[j * d + off..j * d + off + hd];
                    let dp: f64 = go.iter().zip(vj).map(|(a, b)| a * b).sum();
                    ds[j] = dp;
                    dot += dp * pij;
                    let gvj = &mut gv[j * d + off..j * d + off + hd];
                    for (o, &x) in gvj.iter_mut().zip(go) {
                        *o += pij * x;
                    }
                }
                let qi = &qd[i * d + off..i * d + off + hd];
                for j in 0..tk {
                    let pij = p[i * tk + j];
                    if pij == 0.0 {
                        continue;
                    }
                    let dsij = pij * (ds[j] - dot) * scale;
                    let kj = &kd[j * d + off..j * d + off + hd];
                    let gqi = &mut gq[i * d + off..i * d + off + hd];
                    for (o, &x) in gqi.iter_mut().zip(kj) {
                        *o += dsij * x;
                    }
                    let gkj = &mut gk[j * d + off..j * d + off + hd];
                    for (o, &x) in gkj.iter_mut().zip(qi) {
                        *o += dsij * x;
                    }
                }
            }
        }
        self.accumulate(grads, q, Tensor::from_parts(vec![tq, d], gq));
        self.accumulate(grads, k, Tensor::from_parts(vec![tk, d], gk));
        self.accumulate(grads, v, Tensor::from_parts(vec![tk, d], gv));
    }
}

/// Result of a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<(u64, usize), Var>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` when `v` does not
    /// require a gradient or is not on a path to the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for every parameter of `store` that was bound trainable,
    /// indexed by [`ParamId`].
    pub fn for_store(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        store
            .ids()
            .map(|id| {
                self.params
                    .get(&(store.tag(), id.0))
                    .and_then(|&v| self.get(v).cloned())
            })
            .collect()
    }

    /// Adds this sweep's gradients for `store` into an accumulator.
    pub fn accumulate_into(&self, store: &ParamStore, acc: &mut [Option<Tensor>]) {
        for id in store.ids() {
            if let Some(&v) = self.params.get(&(store.tag(), id.0)) {
                if let Some(g) = self.get(v) {
                    match &mut acc[id.0] {
                        Some(a) => a.add_assign(g),
                        slot @ None => *slot = Some(g.clone()),
                    }
                }
            }
        }
    }

    /// True when no parameter of `store` received a gradient.
    pub fn untouched(&self, store: &ParamStore) -> bool {
        store.ids().all(|id| {
            self.params
                .get(&(store.tag(), id.0))
                .and_then(|&v| self.get(v))
                .is_none()
        })
    }
}
