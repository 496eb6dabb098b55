//! Context-aware second-pass decoder.
//!
//! Each layer runs masked self-attention over the target prefix, attention
//! over base-encoder states of the current and context sources, attention
//! over base-decoder representations of the first-pass and context
//! translations, and a feed-forward block. Every attended state carries a
//! one-hot of its sentence distance (0 = current sentence).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};

use super::base::{check_ids, with_bos, with_eos, BaseModel};
use super::config::ModelConfig;
use super::layers::{embed, Attention, Bind, FeedForward, Init, Norm};
use super::StepScorer;

/// A base-model sentence representation and its distance from the current
/// sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSentence {
    pub states: Tensor,
    pub distance: usize,
}

/// Everything CADec attends to, before distance one-hots are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct CadecInput {
    /// Base encoder states (width `d_model`), current sentence at distance 0.
    pub enc_side: Vec<EncodedSentence>,
    /// Base decoder states ⊕ target embeddings (width `2·d_model`); the
    /// first-pass translation is at distance 0.
    pub dec_side: Vec<EncodedSentence>,
}

/// Attention memories with distance one-hots appended.
#[derive(Debug, Clone, PartialEq)]
pub struct CadecMemory {
    pub enc: Tensor,
    pub dec: Tensor,
}

fn with_one_hots(parts: &[EncodedSentence], width: usize, max_context: usize) -> Result<Tensor> {
    let total: usize = parts.iter().map(|p| p.states.rows()).sum();
    let out_w = width + max_context + 1;
    let mut data = Vec::with_capacity(total * out_w);
    for p in parts {
        if p.distance > max_context {
            return Err(Error::InvalidInput(format!(
                "sentence distance {} exceeds max context {max_context}",
                p.distance
            )));
        }
        if p.states.rank() != 2 || p.states.cols() != width {
            return Err(Error::Shape(format!(
                "memory states of shape {:?}, expected width {width}",
                p.states.shape()
            )));
        }
        for i in 0..p.states.rows() {
            data.extend_from_slice(p.states.row(i));
            data.extend((0..=max_context).map(|k| if k == p.distance { 1.0 } else { 0.0 }));
        }
    }
    Tensor::new(vec![total, out_w], data)
}

impl CadecInput {
    pub fn memory(&self, cfg: &ModelConfig) -> Result<CadecMemory> {
        if self.enc_side.is_empty() || self.dec_side.is_empty() {
            return Err(Error::InvalidInput("CADec needs at least the current sentence".into()));
        }
        Ok(CadecMemory {
            enc: with_one_hots(&self.enc_side, cfg.d_model, cfg.max_context)?,
            dec: with_one_hots(&self.dec_side, 2 * cfg.d_model, cfg.max_context)?,
        })
    }
}

impl BaseModel {
    /// Builds the CADec input for the last of `srcs` (oldest first).
    /// `ctx_tgts[i]` translates `srcs[i]`; `first_pass` translates the last
    /// source.
    pub fn cadec_input(&self, srcs: &[&[usize]], first_pass: &[usize], ctx_tgts: &[&[usize]]) -> Result<CadecInput> {
        let n = srcs.len();
        if n == 0 {
            return Err(Error::InvalidInput("no source sentence".into()));
        }
        if n - 1 > self.cfg.max_context {
            return Err(Error::InvalidInput(format!(
                "{} context sentences, at most {} allowed",
                n - 1,
                self.cfg.max_context
            )));
        }
        if ctx_tgts.len() != n - 1 {
            return Err(Error::InvalidInput(format!(
                "{} context translations for {} context sources",
                ctx_tgts.len(),
                n - 1
            )));
        }
        let encs: Vec<Tensor> = srcs.iter().map(|s| self.encode_states(s)).collect::<Result<_>>()?;
        let mut enc_side = vec![EncodedSentence {
            states: encs[n - 1].clone(),
            distance: 0,
        }];
        let mut dec_side = vec![EncodedSentence {
            states: self.decoder_memory(&encs[n - 1], first_pass)?,
            distance: 0,
        }];
        for i in (0..n - 1).rev() {
            enc_side.push(EncodedSentence {
                states: encs[i].clone(),
                distance: n - 1 - i,
            });
            dec_side.push(EncodedSentence {
                states: self.decoder_memory(&encs[i], ctx_tgts[i])?,
                distance: n - 1 - i,
            });
        }
        Ok(CadecInput { enc_side, dec_side })
    }
}

struct CadecLayer {
    n1: Norm,
    self_att: Attention,
    n2: Norm,
    enc_att: Attention,
    n3: Norm,
    dec_att: Attention,
    n4: Norm,
    ff: FeedForward,
}

pub struct CadecModel {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    tgt_emb: ParamId,
    layers: Vec<CadecLayer>,
    norm: Norm,
    out_w: ParamId,
    out_b: ParamId,
}

/// Attention nodes of one forward pass, per layer: self, encoder-side,
/// decoder-side.
pub type AttentionTrace = Vec<[Var; 3]>;

impl CadecModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let (d, h) = (cfg.d_model, cfg.n_heads);
        let tgt_emb = init.embedding("tgt_emb", cfg.tgt_vocab, d);
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let p = format!("cadec.{l}");
                CadecLayer {
                    n1: Norm::new(&mut init, &format!("{p}.n1"), d),
                    self_att: Attention::new(&mut init, &format!("{p}.self"), d, d, h),
                    n2: Norm::new(&mut init, &format!("{p}.n2"), d),
                    enc_att: Attention::new(&mut init, &format!("{p}.enc"), d, cfg.enc_memory_width(), h),
                    n3: Norm::new(&mut init, &format!("{p}.n3"), d),
                    dec_att: Attention::new(&mut init, &format!("{p}.dec"), d, cfg.dec_memory_width(), h),
                    n4: Norm::new(&mut init, &format!("{p}.n4"), d),
                    ff: FeedForward::new(&mut init, &format!("{p}.ff"), d, cfg.d_ff),
                }
            })
            .collect();
        let norm = Norm::new(&mut init, "cadec.norm", d);
        let out_w = if cfg.zero_init_output {
            init.filled("out.w", &[d, cfg.tgt_vocab], 0.0)
        } else {
            init.matrix("out.w", d, cfg.tgt_vocab)
        };
        let out_b = init.filled("out.b", &[cfg.tgt_vocab], 0.0);
        Ok(CadecModel {
            cfg,
            params: store,
            tgt_emb,
            layers,
            norm,
            out_w,
            out_b,
        })
    }

    pub fn from_params(cfg: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut m = CadecModel::new(cfg, 0)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.params.clone()).with_meta("kind", "cadec");
        ck.meta.extend(self.cfg.to_kv());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").map(String::as_str) != Some("cadec") {
            return Err(Error::CheckpointMismatch("not a CADec checkpoint".into()));
        }
        Self::from_params(ModelConfig::from_kv(&ck.meta)?, &ck.params)
    }

    /// Output logits for the decoder input `dec_in`, plus the attention
    /// nodes of every layer.
    pub fn forward(
        &self,
        g: &mut Graph,
        mem: &CadecMemory,
        dec_in: &[usize],
        trainable: bool,
    ) -> Result<(Var, AttentionTrace)> {
        if let Some(&bad) = dec_in.iter().find(|&&i| i >= self.cfg.tgt_vocab) {
            return Err(Error::UnknownId(bad));
        }
        if mem.enc.cols() != self.cfg.enc_memory_width() || mem.dec.cols() != self.cfg.dec_memory_width() {
            return Err(Error::Shape(format!(
                "memory widths {}/{} do not match config {}/{}",
                mem.enc.cols(),
                mem.dec.cols(),
                self.cfg.enc_memory_width(),
                self.cfg.dec_memory_width()
            )));
        }
        let b = Bind {
            store: &self.params,
            trainable,
        };
        let enc_mem = g.constant(mem.enc.clone());
        let dec_mem = g.constant(mem.dec.clone());
        let table = b.get(g, self.tgt_emb);
        let mut x = embed(g, table, dec_in)?;
        let mut trace = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let h = l.n1.apply(g, b, x)?;
            let (a, s) = l.self_att.apply(g, b, h, h, true)?;
            x = g.add(x, a)?;
            let h = l.n2.apply(g, b, x)?;
            let (a, e) = l.enc_att.apply(g, b, h, enc_mem, false)?;
            x = g.add(x, a)?;
            let h = l.n3.apply(g, b, x)?;
            let (a, dd) = l.dec_att.apply(g, b, h, dec_mem, false)?;
            x = g.add(x, a)?;
            let h = l.n4.apply(g, b, x)?;
            let f = l.ff.apply(g, b, h)?;
            x = g.add(x, f)?;
            trace.push([s, e, dd]);
        }
        let x = self.norm.apply(g, b, x)?;
        let (w, bias) = (b.get(g, self.out_w), b.get(g, self.out_b));
        let z = g.matmul(x, w)?;
        Ok((g.add_row(z, bias)?, trace))
    }

    /// Summed negative log-likelihood of `tgt` + EOS.
    pub fn loss(&self, g: &mut Graph, mem: &CadecMemory, tgt: &[usize], trainable: bool) -> Result<Var> {
        check_ids(tgt, self.cfg.tgt_vocab, self.cfg.max_len, "target")?;
        let (logits, _) = self.forward(g, mem, &with_bos(tgt), trainable)?;
        g.cross_entropy(logits, &with_eos(tgt))
    }

    pub fn log_probs(&self, mem: &CadecMemory, tgt: &[usize]) -> Result<Tensor> {
        check_ids(tgt, self.cfg.tgt_vocab, self.cfg.max_len, "target")?;
        let mut g = Graph::new();
        let (logits, _) = self.forward(&mut g, mem, &with_bos(tgt), false)?;
        let lp = g.log_softmax(logits);
        Ok(g.value(lp).clone())
    }

    pub fn score(&self, mem: &CadecMemory, tgt: &[usize]) -> Result<f64> {
        let lp = self.log_probs(mem, tgt)?;
        Ok(with_eos(tgt).iter().enumerate().map(|(i, &t)| lp.at(i, t)).sum())
    }

    pub fn next_log_probs(&self, mem: &CadecMemory, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let (logits, _) = self.forward(&mut g, mem, &with_bos(prefix), false)?;
        let last = g.slice_rows(logits, prefix.len(), 1)?;
        let lp = g.log_softmax(last);
        Ok(g.value(lp).data().to_vec())
    }

    pub fn scorer<'a>(&'a self, mem: &'a CadecMemory) -> CadecScorer<'a> {
        CadecScorer { model: self, mem }
    }
}

pub struct CadecScorer<'a> {
    model: &'a CadecModel,
    mem: &'a CadecMemory,
}

impl StepScorer for CadecScorer<'_> {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.model.next_log_probs(self.mem, prefix)
    }
}

/// Per-position CADec log-probabilities of `tgt` for the last of `srcs`,
/// given a first-pass translation and the context translations.
pub fn cadec_forward(
    base: &BaseModel,
    cadec: &CadecModel,
    srcs: &[&[usize]],
    first_pass: &[usize],
    ctx_tgts: &[&[usize]],
    tgt: &[usize],
) -> Result<Tensor> {
    let mem = base.cadec_input(srcs, first_pass, ctx_tgts)?.memory(&cadec.cfg)?;
    cadec.log_probs(&mem, tgt)
}
