//! Beam search and two-pass document translation.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::{BaseModel, CadecModel, StepScorer};
use crate::tokenizer::EOS;

/// A partial or complete output. `tokens` ends in EOS exactly when
/// `finished` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub score: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens without the terminating EOS.
    pub fn content(&self) -> &[usize] {
        if self.finished {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }
}

/// Higher score first; equal scores go to the lexicographically smaller
/// token sequence.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search over total log-probability without length normalisation.
/// Hypotheses still open after `max_len` tokens compete with their raw
/// scores.
pub fn beam_search<S: StepScorer + ?Sized>(scorer: &S, beam_size: usize, max_len: usize) -> Result<Hypothesis> {
    if beam_size == 0 {
        return Err(Error::InvalidInput("beam size must be at least 1".into()));
    }
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let mut cands = Vec::new();
        for h in &alive {
            let lp = scorer.next_log_probs(&h.tokens)?;
            for (t, &l) in lp.iter().enumerate() {
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = h.tokens.clone();
                tokens.push(t);
                cands.push(Hypothesis {
                    tokens,
                    score: h.score + l,
                    finished: t == EOS,
                });
            }
        }
        cands.sort_by(rank);
        cands.truncate(beam_size);
        let (done, open): (Vec<_>, Vec<_>) = cands.into_iter().partition(|h| h.finished);
        finished.extend(done);
        alive = open;
        if alive.is_empty() {
            break;
        }
        // scores only decrease, so an open hypothesis strictly below the best
        // finished one can never overtake it
        let best_done = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        if alive.iter().all(|h| h.score < best_done) {
            alive.clear();
            break;
        }
    }
    finished
        .into_iter()
        .chain(alive)
        .min_by(rank)
        .ok_or_else(|| Error::InvalidInput("scorer assigned zero probability to every token".into()))
}

/// Output of [`translate_document`].
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentTranslation {
    /// Final translations, one per source sentence.
    pub sentences: Vec<Vec<usize>>,
    /// Base-model translations used as first passes.
    pub first_pass: Vec<Vec<usize>>,
    /// Number of context sentences CADec saw, or `None` when only the base
    /// model was used.
    pub context_sizes: Vec<Option<usize>>,
}

/// Translates sentences in order. The first sentence (or every sentence
/// without a CADec model) is translated by the base model alone; each later
/// sentence is refined by CADec conditioned on up to `max_context` previous
/// sources and their final translations.
pub fn translate_document(
    base: &BaseModel,
    cadec: Option<&CadecModel>,
    srcs: &[Vec<usize>],
    beam_size: usize,
) -> Result<DocumentTranslation> {
    let mut out = DocumentTranslation {
        sentences: Vec::with_capacity(srcs.len()),
        first_pass: Vec::with_capacity(srcs.len()),
        context_sizes: Vec::with_capacity(srcs.len()),
    };
    for (i, src) in srcs.iter().enumerate() {
        let fp = beam_search(&base.scorer(src)?, beam_size, base.cfg.max_len)?
            .content()
            .to_vec();
        let (final_tgt, ctx) = match cadec {
            Some(c) if i > 0 => {
                let lo = i.saturating_sub(c.cfg.max_context);
                let window: Vec<&[usize]> = srcs[lo..=i].iter().map(Vec::as_slice).collect();
                let ctx_tgts: Vec<&[usize]> = out.sentences[lo..i].iter().map(Vec::as_slice).collect();
                let mem = base.cadec_input(&window, &fp, &ctx_tgts)?.memory(&c.cfg)?;
                let h = beam_search(&c.scorer(&mem), beam_size, c.cfg.max_len)?;
                (h.content().to_vec(), Some(i - lo))
            }
            _ => (fp.clone(), None),
        };
        out.sentences.push(final_tgt);
        out.first_pass.push(fp);
        out.context_sizes.push(ctx);
    }
    Ok(out)
}
