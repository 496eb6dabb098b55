//! Corpus BLEU, contrastive scoring and consistency accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::data::{ContrastiveInstance, Phenomenon};
use crate::error::{Error, Result};
use crate::inference::beam_search;
use crate::model::{BaseModel, CadecModel};
use crate::tokenizer::BpeModel;

/// Corpus BLEU with its components.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuScore {
    /// In [0, 100].
    pub score: f64,
    /// Modified 1..4-gram precisions.
    pub precisions: [f64; 4],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<'b>(toks: &'b [&'b str], n: usize) -> HashMap<&'b [&'b str], usize> {
    let mut m = HashMap::new();
    if toks.len() >= n {
        for w in toks.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Whitespace-tokenised corpus BLEU: clipped n-gram precisions up to 4,
/// geometric mean, brevity penalty, no smoothing (any zero precision gives
/// zero).
pub fn bleu_detailed<C: AsRef<str>, R: AsRef<str>>(cands: &[C], refs: &[R], lowercase: bool) -> Result<BleuScore> {
    if cands.len() != refs.len() {
        return Err(Error::InvalidInput(format!(
            "{} candidate lines but {} reference lines",
            cands.len(),
            refs.len()
        )));
    }
    let mut matches = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (c, r) in cands.iter().zip(refs) {
        let (c, r) = if lowercase {
            (c.as_ref().to_lowercase(), r.as_ref().to_lowercase())
        } else {
            (c.as_ref().to_string(), r.as_ref().to_string())
        };
        let ct: Vec<&str> = c.split_whitespace().collect();
        let rt: Vec<&str> = r.split_whitespace().collect();
        hyp_len += ct.len();
        ref_len += rt.len();
        for n in 1..=4 {
            let rc = ngram_counts(&rt, n);
            let cc = ngram_counts(&ct, n);
            totals[n - 1] += ct.len().saturating_sub(n - 1);
            matches[n - 1] += cc.iter().map(|(g, &k)| k.min(*rc.get(g).unwrap_or(&0))).sum::<usize>();
        }
    }
    let mut precisions = [0.0; 4];
    for n in 0..4 {
        if totals[n] > 0 {
            precisions[n] = matches[n] as f64 / totals[n] as f64;
        }
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let score = if precisions.iter().any(|&p| p == 0.0) {
        0.0
    } else {
        100.0 * brevity_penalty * (precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0).exp()
    };
    Ok(BleuScore {
        score,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

pub fn bleu<C: AsRef<str>, R: AsRef<str>>(cands: &[C], refs: &[R], lowercase: bool) -> Result<f64> {
    Ok(bleu_detailed(cands, refs, lowercase)?.score)
}

/// Scores the candidate groups of a contrastive instance. Group 0 is the
/// true translation.
pub trait ContrastiveScorer {
    fn score(&self, inst: &ContrastiveInstance, group: usize) -> Result<f64>;

    fn score_groups(&self, inst: &ContrastiveInstance) -> Result<Vec<f64>> {
        (0..inst.num_groups()).map(|g| self.score(inst, g)).collect()
    }
}

impl<F: Fn(&ContrastiveInstance, usize) -> Result<f64>> ContrastiveScorer for F {
    fn score(&self, inst: &ContrastiveInstance, group: usize) -> Result<f64> {
        self(inst, group)
    }
}

/// Force-decodes the final sentence of each candidate group. Without CADec
/// this is the base model's log-probability and context is ignored. With
/// CADec, the first pass is the base model's beam translation of the
/// current source and the group's own context translations are used.
pub struct ModelScorer<'a> {
    pub base: &'a BaseModel,
    pub cadec: Option<&'a CadecModel>,
    pub src_bpe: &'a BpeModel,
    pub tgt_bpe: &'a BpeModel,
    pub beam_size: usize,
}

impl ModelScorer<'_> {
    fn encode_src(&self, s: &str) -> Vec<usize> {
        let mut v = self.src_bpe.encode(s);
        v.truncate(self.base.cfg.max_len);
        v
    }

    fn encode_tgt(&self, s: &str) -> Vec<usize> {
        let mut v = self.tgt_bpe.encode(s);
        v.truncate(self.base.cfg.max_len);
        v
    }
}

impl ContrastiveScorer for ModelScorer<'_> {
    fn score(&self, inst: &ContrastiveInstance, group: usize) -> Result<f64> {
        Ok(self.score_groups(inst)?[group])
    }

    fn score_groups(&self, inst: &ContrastiveInstance) -> Result<Vec<f64>> {
        let n = inst.src.len();
        let cur_src = self.encode_src(&inst.src[n - 1]);
        let groups = 0..inst.num_groups();
        let Some(cadec) = self.cadec else {
            return groups
                .map(|g| self.base.score(&cur_src, &self.encode_tgt(&inst.group(g)[n - 1])))
                .collect();
        };
        let lo = (n - 1).saturating_sub(cadec.cfg.max_context);
        let srcs: Vec<Vec<usize>> = inst.src[lo..].iter().map(|s| self.encode_src(s)).collect();
        let src_refs: Vec<&[usize]> = srcs.iter().map(Vec::as_slice).collect();
        let first_pass = beam_search(&self.base.scorer(&cur_src)?, self.beam_size, self.base.cfg.max_len)?;
        groups
            .map(|g| {
                let tgts: Vec<Vec<usize>> = inst.group(g)[lo..].iter().map(|t| self.encode_tgt(t)).collect();
                let (cand, ctx) = tgts.split_last().unwrap();
                let ctx: Vec<&[usize]> = ctx.iter().map(Vec::as_slice).collect();
                let mem = self
                    .base
                    .cadec_input(&src_refs, first_pass.content(), &ctx)?
                    .memory(&cadec.cfg)?;
                cadec.score(&mem, cand)
            })
            .collect()
    }
}

/// Correct/total counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Bucket {
    pub correct: usize,
    pub count: usize,
}

impl Bucket {
    pub fn accuracy(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.correct as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub phenomenon: Option<Phenomenon>,
    pub total: Bucket,
    /// Keyed by latest relevant context distance; `None` is the n/a bucket.
    pub by_distance: BTreeMap<Option<usize>, Bucket>,
}

impl ConsistencyReport {
    pub fn accuracy(&self) -> f64 {
        self.total.accuracy()
    }

    fn label(&self) -> String {
        self.phenomenon.map_or_else(|| "mixed".to_string(), |p| p.to_string())
    }

    fn columns(&self) -> Vec<(String, Bucket)> {
        let mut cols = vec![("total".to_string(), self.total)];
        for d in 1..=3 {
            cols.push((format!("d{d}"), self.by_distance.get(&Some(d)).copied().unwrap_or_default()));
        }
        for (k, b) in &self.by_distance {
            match k {
                Some(d) if (1..=3).contains(d) => {}
                Some(d) => cols.push((format!("d{d}"), *b)),
                None => cols.push(("na".to_string(), *b)),
            }
        }
        cols
    }

    /// `phenomenon bucket correct count accuracy` rows.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("phenomenon\tbucket\tcorrect\tcount\taccuracy\n");
        for (name, b) in self.columns() {
            let _ = writeln!(s, "{}\t{name}\t{}\t{}\t{:.4}", self.label(), b.correct, b.count, b.accuracy());
        }
        s
    }

    /// Percentages per bucket, `-` for empty buckets.
    pub fn to_table(&self) -> String {
        let cols = self.columns();
        let mut head = format!("{:<14}", "");
        let mut acc = format!("{:<14}", self.label());
        let mut size = format!("{:<14}", "instances");
        for (name, b) in &cols {
            let _ = write!(head, "{name:>8}");
            if b.count == 0 {
                let _ = write!(acc, "{:>8}", "-");
            } else {
                let _ = write!(acc, "{:>8.1}", 100.0 * b.accuracy());
            }
            let _ = write!(size, "{:>8}", b.count);
        }
        format!("{head}\n{acc}\n{size}\n")
    }
}

/// An instance is correct when the true group scores strictly above every
/// contrastive group; ties are failures.
pub fn evaluate_consistency<S: ContrastiveScorer + ?Sized>(
    scorer: &S,
    instances: &[ContrastiveInstance],
) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport {
        phenomenon: instances.first().map(|i| i.phenomenon),
        total: Bucket::default(),
        by_distance: BTreeMap::new(),
    };
    for (index, inst) in instances.iter().enumerate() {
        inst.validate().map_err(|msg| Error::InvalidInstance { index, msg })?;
        if report.phenomenon != Some(inst.phenomenon) {
            report.phenomenon = None;
        }
        let scores = scorer.score_groups(inst)?;
        let ok = scores[1..].iter().all(|&c| scores[0] > c);
        let b = report.by_distance.entry(inst.distance).or_default();
        b.count += 1;
        report.total.count += 1;
        if ok {
            b.correct += 1;
            report.total.correct += 1;
        }
    }
    Ok(report)
}
