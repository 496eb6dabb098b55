//! Reference corruption and the stochastic mix of first-pass inputs used to
//! train CADec.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{sample_with, BaseModel, CadecInput, CadecModel, EncodedSentence};
use crate::tensor::{Graph, Tensor};
use crate::tokenizer::NUM_SPECIALS;

/// Number of positions replaced: `round(rate · n)`, halves away from zero.
pub fn corruption_count(n: usize, rate: f64) -> usize {
    (rate * n as f64).round().max(0.0) as usize
}

/// Replaces exactly [`corruption_count`] positions, chosen uniformly without
/// replacement, each by a uniformly drawn non-special token that differs
/// from the original.
pub fn corrupt_reference<R: Rng + ?Sized>(reference: &[usize], rate: f64, vocab_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if reference.is_empty() {
        return Err(Error::InvalidInput("cannot corrupt an empty reference".into()));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("corruption rate {rate} outside [0, 1]")));
    }
    if vocab_size < NUM_SPECIALS + 2 {
        return Err(Error::InvalidInput(format!(
            "vocabulary of {vocab_size} has fewer than two ordinary tokens"
        )));
    }
    let k = corruption_count(reference.len(), rate);
    let mut out = reference.to_vec();
    let ordinary = vocab_size - NUM_SPECIALS;
    for pos in index::sample(rng, reference.len(), k) {
        let orig = out[pos];
        out[pos] = if orig >= NUM_SPECIALS && orig < vocab_size {
            let r = NUM_SPECIALS + rng.gen_range(0..ordinary - 1);
            if r >= orig {
                r + 1
            } else {
                r
            }
        } else {
            NUM_SPECIALS + rng.gen_range(0..ordinary)
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedObjectiveConfig {
    /// Probability of using the corrupted reference as the first pass.
    pub p: f64,
    pub corruption_rate: f64,
    /// Approximate number of source tokens per batch.
    pub batch_tokens: usize,
}

impl Default for MixedObjectiveConfig {
    fn default() -> Self {
        MixedObjectiveConfig {
            p: 0.5,
            corruption_rate: 0.2,
            batch_tokens: 16000,
        }
    }
}

impl MixedObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.corruption_rate) {
            return Err(Error::InvalidInput(format!(
                "p={} and corruption_rate={} must lie in [0, 1]",
                self.p, self.corruption_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FirstPassSource {
    CorruptedReference,
    BaseSample,
}

/// One Bernoulli(p) draw.
pub fn choose_first_pass<R: Rng + ?Sized>(p: f64, rng: &mut R) -> FirstPassSource {
    if rng.gen::<f64>() < p {
        FirstPassSource::CorruptedReference
    } else {
        FirstPassSource::BaseSample
    }
}

/// A tokenized fragment (oldest sentence first) with the frozen base
/// model's representations of everything except the first pass.
#[derive(Debug, Clone)]
pub struct CadecExample {
    pub srcs: Vec<Vec<usize>>,
    pub tgts: Vec<Vec<usize>>,
    enc: Vec<Tensor>,
    ctx_dec: Vec<Tensor>,
}

impl CadecExample {
    /// Runs the base model once over sources and reference context
    /// translations.
    pub fn new(base: &BaseModel, srcs: Vec<Vec<usize>>, tgts: Vec<Vec<usize>>) -> Result<Self> {
        let n = srcs.len();
        if n == 0 || tgts.len() != n {
            return Err(Error::InvalidInput("fragment needs matching sources and targets".into()));
        }
        if n - 1 > base.cfg.max_context {
            return Err(Error::InvalidInput(format!("{} context sentences", n - 1)));
        }
        let enc: Vec<Tensor> = srcs.iter().map(|s| base.encode_states(s)).collect::<Result<_>>()?;
        let ctx_dec = (0..n - 1)
            .map(|i| base.decoder_memory(&enc[i], &tgts[i]))
            .collect::<Result<_>>()?;
        Ok(CadecExample { srcs, tgts, enc, ctx_dec })
    }

    pub fn current_target(&self) -> &[usize] {
        self.tgts.last().unwrap()
    }

    pub fn num_source_tokens(&self) -> usize {
        self.srcs.iter().map(|s| s.len() + 1).sum()
    }

    /// CADec input for a given first-pass translation.
    pub fn input(&self, base: &BaseModel, first_pass: &[usize]) -> Result<CadecInput> {
        let n = self.srcs.len();
        let mut enc_side = vec![EncodedSentence {
            states: self.enc[n - 1].clone(),
            distance: 0,
        }];
        let mut dec_side = vec![EncodedSentence {
            states: base.decoder_memory(&self.enc[n - 1], first_pass)?,
            distance: 0,
        }];
        for i in (0..n - 1).rev() {
            enc_side.push(EncodedSentence {
                states: self.enc[i].clone(),
                distance: n - 1 - i,
            });
            dec_side.push(EncodedSentence {
                states: self.ctx_dec[i].clone(),
                distance: n - 1 - i,
            });
        }
        Ok(CadecInput { enc_side, dec_side })
    }

    /// Draws the first-pass translation for one training visit.
    pub fn draw_first_pass(
        &self,
        base: &BaseModel,
        cfg: &MixedObjectiveConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<usize>, FirstPassSource)> {
        let source = choose_first_pass(cfg.p, rng);
        let fp = match source {
            FirstPassSource::CorruptedReference => {
                corrupt_reference(self.current_target(), cfg.corruption_rate, base.cfg.tgt_vocab, rng)?
            }
            FirstPassSource::BaseSample => {
                let enc = &self.enc[self.srcs.len() - 1];
                let scorer = |prefix: &[usize]| base.next_log_probs(enc, prefix);
                sample_with(&scorer, rng, base.cfg.max_len)?
            }
        };
        Ok((fp, source))
    }
}

/// Loss and gradients of one batch under the mixed objective.
#[derive(Debug)]
pub struct BatchLoss {
    /// Summed negative log-likelihood over all target tokens.
    pub nll: f64,
    pub tokens: usize,
    pub grads: Vec<Option<Tensor>>,
    pub corrupted: usize,
    pub sampled: usize,
}

impl BatchLoss {
    pub fn mean(&self) -> f64 {
        self.nll / self.tokens.max(1) as f64
    }
}

/// Per example: draw the first pass (corrupted reference with probability
/// `p`, otherwise a base-model sample), then score the reference current
/// translation under CADec. Base parameters are bound frozen.
pub fn cadec_training_loss(
    batch: &[&CadecExample],
    base: &BaseModel,
    cadec: &CadecModel,
    cfg: &MixedObjectiveConfig,
    rng: &mut ChaCha8Rng,
) -> Result<BatchLoss> {
    cfg.validate()?;
    let mut out = BatchLoss {
        nll: 0.0,
        tokens: 0,
        grads: vec![None; cadec.params.len()],
        corrupted: 0,
        sampled: 0,
    };
    for ex in batch {
        let (fp, source) = ex.draw_first_pass(base, cfg, rng)?;
        match source {
            FirstPassSource::CorruptedReference => out.corrupted += 1,
            FirstPassSource::BaseSample => out.sampled += 1,
        }
        let mem = ex.input(base, &fp)?.memory(&cadec.cfg)?;
        let mut g = Graph::new();
        let loss = cadec.loss(&mut g, &mem, ex.current_target(), true)?;
        out.nll += g.value(loss).item();
        out.tokens += ex.current_target().len() + 1;
        g.backward(loss)?.accumulate_into(&cadec.params, &mut out.grads);
    }
    Ok(out)
}
