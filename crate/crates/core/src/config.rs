//! Run settings as a `key=value` text file. Keys are the kebab-case flag
//! names; flags given on the command line override the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{AdamConfig, MixedObjectiveConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_context: usize,
    pub max_len: usize,
    pub warmup_steps: u64,
    pub lr_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_tokens: usize,
    pub max_steps: u64,
    pub eval_every: u64,
    pub patience: usize,
    pub average_last: usize,
    /// Wall-clock limit per training run; 0 disables it.
    pub time_limit_secs: u64,
    pub seed: u64,
    pub p: f64,
    pub corruption_rate: f64,
    pub beam_size: usize,
    pub min_overlap: f64,
    pub max_gap: f64,
    pub window: usize,
    pub bpe_merges: usize,
    /// Dev contrastive instances per phenomenon scored at each evaluation.
    pub dev_instances: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            n_layers: 1,
            n_heads: 2,
            d_model: 32,
            d_ff: 64,
            max_context: 3,
            max_len: 16,
            warmup_steps: 200,
            lr_scale: 0.5,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-9,
            batch_tokens: 400,
            max_steps: 3000,
            eval_every: 500,
            patience: 5,
            average_last: 5,
            time_limit_secs: 600,
            seed: 1,
            p: 0.5,
            corruption_rate: 0.2,
            beam_size: 4,
            min_overlap: 0.9,
            max_gap: 7.0,
            window: 4,
            bpe_merges: 4000,
            dev_instances: 60,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("bad value {value:?} for {key}")))
}

macro_rules! settings_keys {
    ($($field:ident => $key:literal),* $(,)?) => {
        impl Settings {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one value by its key.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => self.$field = parse($key, value)?,)*
                    _ => return Err(Error::InvalidInput(format!("unknown setting {key:?}"))),
                }
                Ok(())
            }

            pub fn to_kv(&self) -> BTreeMap<String, String> {
                let mut m = BTreeMap::new();
                $(m.insert($key.to_string(), self.$field.to_string());)*
                m
            }
        }
    };
}

settings_keys! {
    n_layers => "n-layers",
    n_heads => "n-heads",
    d_model => "d-model",
    d_ff => "d-ff",
    max_context => "max-context",
    max_len => "max-len",
    warmup_steps => "warmup-steps",
    lr_scale => "lr-scale",
    beta1 => "beta1",
    beta2 => "beta2",
    adam_eps => "adam-eps",
    batch_tokens => "batch-tokens",
    max_steps => "max-steps",
    eval_every => "eval-every",
    patience => "patience",
    average_last => "average-last",
    time_limit_secs => "time-limit-secs",
    seed => "seed",
    p => "p",
    corruption_rate => "corruption-rate",
    beam_size => "beam-size",
    min_overlap => "min-overlap",
    max_gap => "max-gap",
    window => "window",
    bpe_merges => "bpe-merges",
    dev_instances => "dev-instances",
}

impl Settings {
    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected key=value"))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s = Settings::default();
        s.apply_text(&text, &path.display().to_string())?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        self.to_kv().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// Model architecture with the given vocabulary sizes.
    pub fn model_config(&self, src_vocab: usize, tgt_vocab: usize) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            max_context: self.max_context,
            src_vocab,
            tgt_vocab,
            max_len: self.max_len,
            zero_init_output: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.adam_eps,
                warmup_steps: self.warmup_steps,
                scale: self.lr_scale,
            },
            batch_tokens: self.batch_tokens,
            max_steps: self.max_steps,
            eval_every: self.eval_every,
            patience: self.patience,
            average_last: self.average_last,
            seed: self.seed,
            time_limit: (self.time_limit_secs > 0).then(|| Duration::from_secs(self.time_limit_secs)),
            checkpoint_dir: None,
        }
    }

    pub fn mixed_config(&self) -> MixedObjectiveConfig {
        MixedObjectiveConfig {
            p: self.p,
            corruption_rate: self.corruption_rate,
            batch_tokens: self.batch_tokens,
        }
    }
}
