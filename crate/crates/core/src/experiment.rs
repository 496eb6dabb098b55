//! End-to-end pipelines shared by the command line and the synthetic
//! experiment: tokenised training material, base and CADec training with
//! dev evaluation, and test-set scoring.

use std::path::PathBuf;

use crate::config::Settings;
use crate::data::{
    filter_pairs, gen_synthetic_corpus, group_and_fragment, ContrastiveInstance, Fragment, FragmentOptions, SubtitlePair,
    SynthConfig, SynthData,
};
use crate::error::{Error, Result};
use crate::evaluation::{bleu, evaluate_consistency, ConsistencyReport, ModelScorer};
use crate::inference::translate_document;
use crate::model::{BaseModel, CadecModel, ModelConfig};
use crate::tokenizer::BpeModel;
use crate::training::{train_base, train_cadec, CadecExample, DevMetrics, MetricLog, TrainReport};

/// Tokenizers and tokenised training material.
pub struct Prepared {
    pub src_bpe: BpeModel,
    pub tgt_bpe: BpeModel,
    pub model_cfg: ModelConfig,
    pub base_pairs: Vec<(Vec<usize>, Vec<usize>)>,
    /// Fragments for CADec training.
    pub cadec_fragments: Vec<Fragment>,
    /// Dev fragments for BLEU.
    pub dev: Vec<Fragment>,
    /// Dev contrastive instances for consistency accuracy.
    pub dev_sets: Vec<ContrastiveInstance>,
}

impl Prepared {
    /// Tokenises `pairs` (already filtered) for the base model; pairs longer
    /// than `max_len` on either side are dropped.
    pub fn new(
        src_bpe: BpeModel,
        tgt_bpe: BpeModel,
        settings: &Settings,
        pairs: &[SubtitlePair],
        cadec_fragments: Vec<Fragment>,
        dev: Vec<Fragment>,
        dev_sets: Vec<ContrastiveInstance>,
    ) -> Self {
        let model_cfg = settings.model_config(src_bpe.vocab_size(), tgt_bpe.vocab_size());
        let mut prep = Prepared {
            src_bpe,
            tgt_bpe,
            model_cfg,
            base_pairs: Vec::new(),
            cadec_fragments,
            dev,
            dev_sets,
        };
        prep.base_pairs = pairs
            .iter()
            .filter(|p| prep.fits(p))
            .map(|p| (prep.src_bpe.encode(&p.src), prep.tgt_bpe.encode(&p.tgt)))
            .collect();
        prep
    }

    fn fits(&self, p: &SubtitlePair) -> bool {
        let m = self.model_cfg.max_len;
        self.src_bpe.encode(&p.src).len() <= m && self.tgt_bpe.encode(&p.tgt).len() <= m
    }

    /// Source ids truncated to `max_len`.
    pub fn encode_src(&self, s: &str) -> Vec<usize> {
        let mut v = self.src_bpe.encode(s);
        v.truncate(self.model_cfg.max_len);
        v
    }

    /// CADec training examples; needs the trained base model.
    pub fn cadec_examples(&self, base: &BaseModel) -> Result<Vec<CadecExample>> {
        self.cadec_fragments
            .iter()
            .filter(|f| f.pairs().all(|p| self.fits(p)))
            .map(|f| {
                let srcs = f.sources().iter().map(|s| self.src_bpe.encode(s)).collect();
                let tgts = f.targets().iter().map(|t| self.tgt_bpe.encode(t)).collect();
                CadecExample::new(base, srcs, tgts)
            })
            .collect()
    }
}

/// Filters by overlap and windows the corpus into CADec fragments (with the
/// short prefixes).
pub fn filter_and_fragment(pairs: &[SubtitlePair], settings: &Settings) -> Result<(Vec<SubtitlePair>, Vec<Fragment>)> {
    let kept = filter_pairs(pairs, settings.min_overlap);
    let fragments = group_and_fragment(
        &kept,
        FragmentOptions {
            max_gap: settings.max_gap,
            window: settings.window,
            include_short_prefixes: true,
        },
    )?;
    Ok((kept, fragments))
}

/// Separate source and target BPE models.
pub fn train_bpe(pairs: &[SubtitlePair], merges: usize) -> Result<(BpeModel, BpeModel)> {
    let srcs: Vec<&str> = pairs.iter().map(|p| p.src.as_str()).collect();
    let tgts: Vec<&str> = pairs.iter().map(|p| p.tgt.as_str()).collect();
    Ok((BpeModel::train(&srcs, merges)?, BpeModel::train(&tgts, merges)?))
}

/// Evenly spaced mirrored pairs from a set whose pairs are adjacent, at
/// most `n` instances.
pub fn spread_pairs(set: &[ContrastiveInstance], n: usize) -> Vec<ContrastiveInstance> {
    let pairs = set.len() / 2;
    let want = (n / 2).min(pairs);
    (0..want)
        .flat_map(|k| {
            let i = k * pairs / want;
            set[2 * i..2 * i + 2].to_vec()
        })
        .collect()
}

/// Generates synthetic data and prepares it for training.
pub fn prepare_synthetic(synth: &SynthConfig, settings: &Settings) -> Result<(Prepared, SynthData)> {
    let data = gen_synthetic_corpus(synth);
    let (kept, fragments) = filter_and_fragment(&data.train, settings)?;
    let (src_bpe, tgt_bpe) = train_bpe(&kept, settings.bpe_merges)?;
    let mut dev_sets = spread_pairs(&data.deixis_dev, settings.dev_instances);
    dev_sets.extend(spread_pairs(&data.cohesion_dev, settings.dev_instances));
    let prep = Prepared::new(src_bpe, tgt_bpe, settings, &kept, fragments, data.dev.clone(), dev_sets);
    Ok((prep, data))
}

/// Translates every sentence of every fragment; returns hypotheses and
/// references in the same order.
pub fn translate_fragments(
    prep: &Prepared,
    base: &BaseModel,
    cadec: Option<&CadecModel>,
    fragments: &[Fragment],
    beam_size: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    for f in fragments {
        let srcs: Vec<Vec<usize>> = f.sources().iter().map(|s| prep.encode_src(s)).collect();
        let out = translate_document(base, cadec, &srcs, beam_size)?;
        for (ids, r) in out.sentences.iter().zip(f.targets()) {
            hyps.push(prep.tgt_bpe.decode_clean(ids)?);
            refs.push(r.to_string());
        }
    }
    Ok((hyps, refs))
}

/// Lowercased corpus BLEU over all dev sentences.
pub fn dev_bleu(prep: &Prepared, base: &BaseModel, cadec: Option<&CadecModel>, beam_size: usize) -> Result<f64> {
    let (h, r) = translate_fragments(prep, base, cadec, &prep.dev, beam_size)?;
    bleu(&h, &r, true)
}

pub fn consistency(
    prep: &Prepared,
    base: &BaseModel,
    cadec: Option<&CadecModel>,
    instances: &[ContrastiveInstance],
    beam_size: usize,
) -> Result<ConsistencyReport> {
    let scorer = ModelScorer {
        base,
        cadec,
        src_bpe: &prep.src_bpe,
        tgt_bpe: &prep.tgt_bpe,
        beam_size,
    };
    evaluate_consistency(&scorer, instances)
}

/// Trains the base model; dev BLEU is its only stopping metric.
pub fn run_base(
    prep: &Prepared,
    settings: &Settings,
    checkpoint_dir: Option<PathBuf>,
    log: &mut MetricLog,
) -> Result<(BaseModel, TrainReport)> {
    let mut base = BaseModel::new(prep.model_cfg.clone(), settings.seed)?;
    let cfg = crate::training::TrainConfig {
        checkpoint_dir,
        ..settings.train_config()
    };
    let report = train_base(&mut base, &prep.base_pairs, &cfg, log, |m| {
        Ok(DevMetrics {
            bleu: dev_bleu(prep, m, None, settings.beam_size)?,
            consistency: None,
        })
    })?;
    Ok((base, report))
}

/// Trains CADec over a frozen base model with corruption probability `p`.
pub fn run_cadec(
    prep: &Prepared,
    settings: &Settings,
    base: &BaseModel,
    examples: &[CadecExample],
    p: f64,
    checkpoint_dir: Option<PathBuf>,
    log: &mut MetricLog,
) -> Result<(CadecModel, TrainReport)> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("no CADec training examples".into()));
    }
    if base.cfg != prep.model_cfg {
        return Err(Error::CheckpointMismatch(
            "base model configuration differs from the run settings".into(),
        ));
    }
    let mixed = crate::training::MixedObjectiveConfig {
        p,
        ..settings.mixed_config()
    };
    let cfg = crate::training::TrainConfig {
        checkpoint_dir,
        ..settings.train_config()
    };
    let mut cadec = CadecModel::new(prep.model_cfg.clone(), settings.seed.wrapping_add(1000))?;
    let report = train_cadec(&mut cadec, base, examples, &mixed, &cfg, log, |m| {
        let consistency = if prep.dev_sets.is_empty() {
            None
        } else {
            Some(consistency(prep, base, Some(m), &prep.dev_sets, settings.beam_size)?.accuracy())
        };
        Ok(DevMetrics {
            bleu: dev_bleu(prep, base, Some(m), settings.beam_size)?,
            consistency,
        })
    })?;
    Ok((cadec, report))
}

/// Scores of one model on the synthetic dev set and contrastive test sets.
#[derive(Debug, Clone)]
pub struct SyntheticScores {
    pub bleu: f64,
    pub deixis: ConsistencyReport,
    pub cohesion: ConsistencyReport,
}

/// Base model scores plus one CADec run per corruption probability.
pub struct SyntheticOutcome {
    pub prepared: Prepared,
    pub data: SynthData,
    pub base_model: BaseModel,
    pub base: SyntheticScores,
    pub cadec: Vec<(f64, SyntheticScores)>,
}

fn synthetic_scores(
    prep: &Prepared,
    data: &SynthData,
    base: &BaseModel,
    cadec: Option<&CadecModel>,
    beam_size: usize,
) -> Result<SyntheticScores> {
    Ok(SyntheticScores {
        bleu: dev_bleu(prep, base, cadec, beam_size)?,
        deixis: consistency(prep, base, cadec, &data.deixis_test, beam_size)?,
        cohesion: consistency(prep, base, cadec, &data.cohesion_test, beam_size)?,
    })
}

/// Trains a base model and one CADec per `p` on generated data and scores
/// them on the held-out contrastive sets.
pub fn synthetic_experiment(synth: &SynthConfig, settings: &Settings, ps: &[f64]) -> Result<SyntheticOutcome> {
    let (prep, data) = prepare_synthetic(synth, settings)?;
    let mut log = MetricLog::in_memory();
    let (base, _) = run_base(&prep, settings, None, &mut log)?;
    let examples = prep.cadec_examples(&base)?;
    let base_scores = synthetic_scores(&prep, &data, &base, None, settings.beam_size)?;
    let mut cadec = Vec::with_capacity(ps.len());
    for &p in ps {
        let (model, _) = run_cadec(&prep, settings, &base, &examples, p, None, &mut log)?;
        cadec.push((p, synthetic_scores(&prep, &data, &base, Some(&model), settings.beam_size)?));
    }
    Ok(SyntheticOutcome {
        prepared: prep,
        data,
        base_model: base,
        base: base_scores,
        cadec,
    })
}
