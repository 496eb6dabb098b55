//! The context-agnostic base Transformer and the context-aware decoder.

pub mod base;
pub mod cadec;
pub mod config;
pub mod layers;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tokenizer::EOS;

pub use base::{BaseModel, BaseScorer};
pub use cadec::{cadec_forward, AttentionTrace, CadecInput, CadecMemory, CadecModel, CadecScorer, EncodedSentence};
pub use config::ModelConfig;

/// Next-token log-probabilities given the tokens produced so far (BOS is
/// implicit and never part of `prefix`).
pub trait StepScorer {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>>;
}

impl<F: Fn(&[usize]) -> Result<Vec<f64>>> StepScorer for F {
    fn next_log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self(prefix)
    }
}

/// Draws an index from log-probabilities by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> Result<usize> {
    if log_probs.is_empty() {
        return Err(Error::InvalidInput("empty distribution".into()));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, lp) in log_probs.iter().enumerate() {
        let p = lp.exp();
        if p > 0.0 {
            last_nonzero = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_nonzero)
}

/// Ancestral sampling until EOS or `max_len` tokens. EOS is not returned.
pub fn sample_with<S: StepScorer + ?Sized, R: Rng + ?Sized>(scorer: &S, rng: &mut R, max_len: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    while out.len() < max_len {
        let lp = scorer.next_log_probs(&out)?;
        let t = sample_index(&lp, rng)?;
        if t == EOS {
            break;
        }
        out.push(t);
    }
    Ok(out)
}

/// Samples a translation of `src` from the base model.
pub fn sample_translation<R: Rng + ?Sized>(base: &BaseModel, src: &[usize], rng: &mut R, max_len: usize) -> Result<Vec<usize>> {
    let scorer = base.scorer(src)?;
    sample_with(&scorer, rng, max_len.min(base.cfg.max_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_model_sampling_is_greedy() {
        // always prefers token (len + 5), EOS after three tokens
        let delta = |p: &[usize]| -> Result<Vec<f64>> {
            let mut v = vec![f64::NEG_INFINITY; 10];
            v[if p.len() == 3 { EOS } else { p.len() + 5 }] = 0.0;
            Ok(v)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_with(&delta, &mut rng, 10).unwrap(), vec![5, 6, 7]);
        assert_eq!(sample_with(&delta, &mut rng, 2).unwrap(), vec![5, 6]);
    }

    #[test]
    fn sampling_is_seeded() {
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 8,
            d_ff: 8,
            ..ModelConfig::desk(10, 10)
        };
        let m = BaseModel::new(cfg, 4).unwrap();
        let a = sample_translation(&m, &[5, 6], &mut ChaCha8Rng::seed_from_u64(9), 6).unwrap();
        let b = sample_translation(&m, &[5, 6], &mut ChaCha8Rng::seed_from_u64(9), 6).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 6);
    }
}
