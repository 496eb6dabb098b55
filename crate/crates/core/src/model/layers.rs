//! Parameter initialisation and the Transformer sublayers shared by the
//! base model and CADec.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

pub(crate) struct Init<'a> {
    pub store: &'a mut ParamStore,
    pub rng: &'a mut ChaCha8Rng,
}

impl Init<'_> {
    /// Xavier-uniform matrix.
    pub fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.gen_range(-a..a)).collect();
        self.store.add(name, Tensor::from_parts(vec![rows, cols], data))
    }

    /// Unit-variance uniform table.
    pub fn embedding(&mut self, name: &str, vocab: usize, d: usize) -> ParamId {
        let a = 3f64.sqrt();
        let data = (0..vocab * d).map(|_| self.rng.gen_range(-a..a)).collect();
        self.store.add(name, Tensor::from_parts(vec![vocab, d], data))
    }

    pub fn filled(&mut self, name: &str, shape: &[usize], v: f64) -> ParamId {
        self.store.add(name, Tensor::filled(shape, v))
    }
}

/// Binds parameters of one store into a graph, trainable or frozen.
#[derive(Clone, Copy)]
pub(crate) struct Bind<'a> {
    pub store: &'a ParamStore,
    pub trainable: bool,
}

impl Bind<'_> {
    pub fn get(&self, g: &mut Graph, id: ParamId) -> Var {
        g.param(self.store, id, self.trainable)
    }
}

pub(crate) struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

impl Norm {
    pub fn new(init: &mut Init, prefix: &str, d: usize) -> Self {
        Norm {
            gamma: init.filled(&format!("{prefix}.gamma"), &[d], 1.0),
            beta: init.filled(&format!("{prefix}.beta"), &[d], 0.0),
        }
    }

    pub fn apply(&self, g: &mut Graph, b: Bind, x: Var) -> Result<Var> {
        let gamma = b.get(g, self.gamma);
        let beta = b.get(g, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Multi-head attention whose keys and values may come from a memory of a
/// different width than the queries.
pub(crate) struct Attention {
    wq: ParamId,
    wk: ParamId,
    wv: ParamId,
    wo: ParamId,
    heads: usize,
}

impl Attention {
    pub fn new(init: &mut Init, prefix: &str, d: usize, mem_width: usize, heads: usize) -> Self {
        Attention {
            wq: init.matrix(&format!("{prefix}.wq"), d, d),
            wk: init.matrix(&format!("{prefix}.wk"), mem_width, d),
            wv: init.matrix(&format!("{prefix}.wv"), mem_width, d),
            wo: init.matrix(&format!("{prefix}.wo"), d, d),
            heads,
        }
    }

    /// Returns the projected output and the raw attention node.
    pub fn apply(&self, g: &mut Graph, b: Bind, x: Var, mem: Var, causal: bool) -> Result<(Var, Var)> {
        let (wq, wk, wv, wo) = (b.get(g, self.wq), b.get(g, self.wk), b.get(g, self.wv), b.get(g, self.wo));
        let q = g.matmul(x, wq)?;
        let k = g.matmul(mem, wk)?;
        let v = g.matmul(mem, wv)?;
        let att = g.attention(q, k, v, self.heads, causal)?;
        Ok((g.matmul(att, wo)?, att))
    }
}

pub(crate) struct FeedForward {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl FeedForward {
    pub fn new(init: &mut Init, prefix: &str, d: usize, d_ff: usize) -> Self {
        FeedForward {
            w1: init.matrix(&format!("{prefix}.w1"), d, d_ff),
            b1: init.filled(&format!("{prefix}.b1"), &[d_ff], 0.0),
            w2: init.matrix(&format!("{prefix}.w2"), d_ff, d),
            b2: init.filled(&format!("{prefix}.b2"), &[d], 0.0),
        }
    }

    pub fn apply(&self, g: &mut Graph, b: Bind, x: Var) -> Result<Var> {
        let (w1, b1, w2, b2) = (b.get(g, self.w1), b.get(g, self.b1), b.get(g, self.w2), b.get(g, self.b2));
        let h = g.matmul(x, w1)?;
        let h = g.add_row(h, b1)?;
        let h = g.relu(h);
        let h = g.matmul(h, w2)?;
        g.add_row(h, b2)
    }
}

/// Sinusoidal position encodings for positions `0..len`.
pub fn positions(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let k = (i / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(k / d as f64);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::from_parts(vec![len, d], data)
}

/// Token embeddings plus position encodings.
pub(crate) fn embed(g: &mut Graph, table: Var, ids: &[usize]) -> Result<Var> {
    let e = g.embedding(table, ids)?;
    let d = g.value(e).cols();
    let p = g.constant(positions(ids.len(), d));
    g.add(e, p)
}
