//! Context-agnostic pre-norm Transformer encoder-decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Checkpoint, Graph, ParamId, ParamStore, Tensor, Var};
use crate::tokenizer::{BOS, EOS};

use super::config::ModelConfig;
use super::layers::{embed, Attention, Bind, FeedForward, Init, Norm};
use super::StepScorer;

struct EncLayer {
    n1: Norm,
    att: Attention,
    n2: Norm,
    ff: FeedForward,
}

struct DecLayer {
    n1: Norm,
    self_att: Attention,
    n2: Norm,
    cross: Attention,
    n3: Norm,
    ff: FeedForward,
}

pub struct BaseModel {
    pub cfg: ModelConfig,
    pub params: ParamStore,
    src_emb: ParamId,
    tgt_emb: ParamId,
    enc: Vec<EncLayer>,
    enc_norm: Norm,
    dec: Vec<DecLayer>,
    dec_norm: Norm,
    out_w: ParamId,
    out_b: ParamId,
}

pub(crate) fn check_ids(ids: &[usize], vocab: usize, max_len: usize, what: &str) -> Result<()> {
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
        return Err(Error::UnknownId(bad));
    }
    if ids.len() > max_len {
        return Err(Error::InvalidInput(format!(
            "{what} has {} tokens, max_len is {max_len}",
            ids.len()
        )));
    }
    Ok(())
}

pub(crate) fn with_bos(tgt: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(tgt.len() + 1);
    v.push(BOS);
    v.extend_from_slice(tgt);
    v
}

pub(crate) fn with_eos(tgt: &[usize]) -> Vec<usize> {
    let mut v = tgt.to_vec();
    v.push(EOS);
    v
}

impl BaseModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            store: &mut store,
            rng: &mut rng,
        };
        let (d, h) = (cfg.d_model, cfg.n_heads);
        let src_emb = init.embedding("src_emb", cfg.src_vocab, d);
        let tgt_emb = init.embedding("tgt_emb", cfg.tgt_vocab, d);
        let enc = (0..cfg.n_layers)
            .map(|l| {
                let p = format!("enc.{l}");
                EncLayer {
                    n1: Norm::new(&mut init, &format!("{p}.n1"), d),
                    att: Attention::new(&mut init, &format!("{p}.self"), d, d, h),
                    n2: Norm::new(&mut init, &format!("{p}.n2"), d),
                    ff: FeedForward::new(&mut init, &format!("{p}.ff"), d, cfg.d_ff),
                }
            })
            .collect();
        let enc_norm = Norm::new(&mut init, "enc.norm", d);
        let dec = (0..cfg.n_layers)
            .map(|l| {
                let p = format!("dec.{l}");
                DecLayer {
                    n1: Norm::new(&mut init, &format!("{p}.n1"), d),
                    self_att: Attention::new(&mut init, &format!("{p}.self"), d, d, h),
                    n2: Norm::new(&mut init, &format!("{p}.n2"), d),
                    cross: Attention::new(&mut init, &format!("{p}.cross"), d, d, h),
                    n3: Norm::new(&mut init, &format!("{p}.n3"), d),
                    ff: FeedForward::new(&mut init, &format!("{p}.ff"), d, cfg.d_ff),
                }
            })
            .collect();
        let dec_norm = Norm::new(&mut init, "dec.norm", d);
        let out_w = if cfg.zero_init_output {
            init.filled("out.w", &[d, cfg.tgt_vocab], 0.0)
        } else {
            init.matrix("out.w", d, cfg.tgt_vocab)
        };
        let out_b = init.filled("out.b", &[cfg.tgt_vocab], 0.0);
        Ok(BaseModel {
            cfg,
            params: store,
            src_emb,
            tgt_emb,
            enc,
            enc_norm,
            dec,
            dec_norm,
            out_w,
            out_b,
        })
    }

    /// Rebuilds a model around existing parameters.
    pub fn from_params(cfg: ModelConfig, params: &ParamStore) -> Result<Self> {
        let mut m = BaseModel::new(cfg, 0)?;
        m.params.load_from(params)?;
        Ok(m)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(self.params.clone()).with_meta("kind", "base");
        ck.meta.extend(self.cfg.to_kv());
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.meta.get("kind").map(String::as_str) != Some("base") {
            return Err(Error::CheckpointMismatch("not a base model checkpoint".into()));
        }
        Self::from_params(ModelConfig::from_kv(&ck.meta)?, &ck.params)
    }

    fn bind(&self, trainable: bool) -> Bind<'_> {
        Bind {
            store: &self.params,
            trainable,
        }
    }

    /// Encoder states for `src` followed by EOS.
    pub fn encode(&self, g: &mut Graph, src: &[usize], trainable: bool) -> Result<Var> {
        check_ids(src, self.cfg.src_vocab, self.cfg.max_len, "source")?;
        let b = self.bind(trainable);
        let table = b.get(g, self.src_emb);
        let mut x = embed(g, table, &with_eos(src))?;
        for l in &self.enc {
            let h = l.n1.apply(g, b, x)?;
            let (a, _) = l.att.apply(g, b, h, h, false)?;
            x = g.add(x, a)?;
            let h = l.n2.apply(g, b, x)?;
            let f = l.ff.apply(g, b, h)?;
            x = g.add(x, f)?;
        }
        self.enc_norm.apply(g, b, x)
    }

    /// Final-layer decoder states for the decoder input `dec_in`.
    pub fn decode(&self, g: &mut Graph, enc: Var, dec_in: &[usize], trainable: bool) -> Result<Var> {
        if let Some(&bad) = dec_in.iter().find(|&&i| i >= self.cfg.tgt_vocab) {
            return Err(Error::UnknownId(bad));
        }
        let b = self.bind(trainable);
        let table = b.get(g, self.tgt_emb);
        let mut x = embed(g, table, dec_in)?;
        for l in &self.dec {
            let h = l.n1.apply(g, b, x)?;
            let (a, _) = l.self_att.apply(g, b, h, h, true)?;
            x = g.add(x, a)?;
            let h = l.n2.apply(g, b, x)?;
            let (a, _) = l.cross.apply(g, b, h, enc, false)?;
            x = g.add(x, a)?;
            let h = l.n3.apply(g, b, x)?;
            let f = l.ff.apply(g, b, h)?;
            x = g.add(x, f)?;
        }
        self.dec_norm.apply(g, b, x)
    }

    pub fn output(&self, g: &mut Graph, hidden: Var, trainable: bool) -> Result<Var> {
        let b = self.bind(trainable);
        let (w, bias) = (b.get(g, self.out_w), b.get(g, self.out_b));
        let z = g.matmul(hidden, w)?;
        g.add_row(z, bias)
    }

    /// Summed negative log-likelihood of `tgt` + EOS given `src`.
    pub fn loss(&self, g: &mut Graph, src: &[usize], tgt: &[usize], trainable: bool) -> Result<Var> {
        check_ids(tgt, self.cfg.tgt_vocab, self.cfg.max_len, "target")?;
        let enc = self.encode(g, src, trainable)?;
        let h = self.decode(g, enc, &with_bos(tgt), trainable)?;
        let logits = self.output(g, h, trainable)?;
        g.cross_entropy(logits, &with_eos(tgt))
    }

    /// Log-probabilities over the target vocabulary at every position of
    /// `tgt` + EOS (`|tgt|+1` rows).
    pub fn log_probs(&self, src: &[usize], tgt: &[usize]) -> Result<Tensor> {
        check_ids(tgt, self.cfg.tgt_vocab, self.cfg.max_len, "target")?;
        let mut g = Graph::new();
        let enc = self.encode(&mut g, src, false)?;
        let h = self.decode(&mut g, enc, &with_bos(tgt), false)?;
        let logits = self.output(&mut g, h, false)?;
        let lp = g.log_softmax(logits);
        Ok(g.value(lp).clone())
    }

    /// Sum of token log-probabilities of `tgt` + EOS.
    pub fn score(&self, src: &[usize], tgt: &[usize]) -> Result<f64> {
        let lp = self.log_probs(src, tgt)?;
        Ok(with_eos(tgt).iter().enumerate().map(|(i, &t)| lp.at(i, t)).sum())
    }

    pub fn encode_states(&self, src: &[usize]) -> Result<Tensor> {
        let mut g = Graph::new();
        let enc = self.encode(&mut g, src, false)?;
        Ok(g.value(enc).clone())
    }

    /// Next-token log-probabilities after `prefix` (without BOS).
    pub fn next_log_probs(&self, enc_states: &Tensor, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let enc = g.constant(enc_states.clone());
        let h = self.decode(&mut g, enc, &with_bos(prefix), false)?;
        let last = g.slice_rows(h, prefix.len(), 1)?;
        let logits = self.output(&mut g, last, false)?;
        let lp = g.log_softmax(logits);
        Ok(g.value(lp).data().to_vec())
    }

    /// Decoder-side representation of a translation for CADec: last-layer
    /// states over `BOS tgt EOS` concatenated with the target embeddings of
    /// the same tokens (`|tgt|+2` rows of width `2·d_model`).
    pub fn decoder_memory(&self, enc_states: &Tensor, tgt: &[usize]) -> Result<Tensor> {
        check_ids(tgt, self.cfg.tgt_vocab, self.cfg.max_len, "translation")?;
        let mut ids = with_bos(tgt);
        ids.push(EOS);
        let mut g = Graph::new();
        let enc = g.constant(enc_states.clone());
        let h = self.decode(&mut g, enc, &ids, false)?;
        let table = g.param(&self.params, self.tgt_emb, false);
        let e = g.embedding(table, &ids)?;
        let m = g.concat_cols(&[h, e])?;
        Ok(g.value(m).clone())
    }

    pub fn scorer(&self, src: &[usize]) -> Result<BaseScorer<'_>> {
        Ok(BaseScorer {
            model: self,
            enc: self.encode_states(src)?,
        })
    }
}

/// Step-wise decoding of one source sentence.
pub struct BaseScorer<'a> {
    model: &'a BaseModel,
    enc: Tensor,
}

impl BaseScorer<'_> {
    pub fn encoder_states(&self) -> &Tensor {
        &self.enc
    }
}

impl StepScorer for BaseScorer<'_> {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.model.next_log_probs(&self.enc, prefix)
    }
}
