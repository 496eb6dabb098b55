use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Architecture hyperparameters shared by the base model and CADec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    /// Maximum number of context sentences CADec attends to.
    pub max_context: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Maximum content tokens per sentence (BOS/EOS excluded).
    pub max_len: usize,
    /// Start the output projection at zero (uniform initial predictions).
    pub zero_init_output: bool,
}

impl ModelConfig {
    /// Small CPU-friendly configuration.
    pub fn desk(src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_ff: 128,
            max_context: 3,
            src_vocab,
            tgt_vocab,
            max_len: 32,
            zero_init_output: false,
        }
    }

    /// Transformer-base sizes.
    pub fn transformer_base(src_vocab: usize, tgt_vocab: usize) -> Self {
        ModelConfig {
            n_layers: 6,
            n_heads: 8,
            d_model: 512,
            d_ff: 2048,
            max_len: 128,
            ..Self::desk(src_vocab, tgt_vocab)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return bad("layer, head and width counts must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by {} heads", self.d_model, self.n_heads));
        }
        if self.src_vocab == 0 || self.tgt_vocab == 0 || self.max_len == 0 {
            return bad("vocabularies and max_len must be positive".into());
        }
        Ok(())
    }

    /// Width of a distance one-hot.
    pub fn distance_width(&self) -> usize {
        self.max_context + 1
    }

    /// Width of encoder-side CADec memory rows: base encoder state ⊕ one-hot.
    pub fn enc_memory_width(&self) -> usize {
        self.d_model + self.distance_width()
    }

    /// Width of decoder-side CADec memory rows: base decoder state ⊕ target
    /// embedding ⊕ one-hot.
    pub fn dec_memory_width(&self) -> usize {
        2 * self.d_model + self.distance_width()
    }

    pub fn to_kv(&self) -> BTreeMap<String, String> {
        [
            ("n_layers", self.n_layers.to_string()),
            ("n_heads", self.n_heads.to_string()),
            ("d_model", self.d_model.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("max_context", self.max_context.to_string()),
            ("src_vocab", self.src_vocab.to_string()),
            ("tgt_vocab", self.tgt_vocab.to_string()),
            ("max_len", self.max_len.to_string()),
            ("zero_init_output", self.zero_init_output.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
            let v = kv
                .get(key)
                .ok_or_else(|| Error::CheckpointMismatch(format!("missing config key {key}")))?;
            v.parse()
                .map_err(|_| Error::CheckpointMismatch(format!("bad value {v:?} for {key}")))
        }
        let cfg = ModelConfig {
            n_layers: get(kv, "n_layers")?,
            n_heads: get(kv, "n_heads")?,
            d_model: get(kv, "d_model")?,
            d_ff: get(kv, "d_ff")?,
            max_context: get(kv, "max_context")?,
            src_vocab: get(kv, "src_vocab")?,
            tgt_vocab: get(kv, "tgt_vocab")?,
            max_len: get(kv, "max_len")?,
            zero_init_output: get(kv, "zero_init_output")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Stable one-line summary stored with checkpoints.
    pub fn fingerprint(&self) -> String {
        self.to_kv()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}
