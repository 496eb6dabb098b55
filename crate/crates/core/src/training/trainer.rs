use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::average::average_checkpoints;
use super::batch::make_batches;
use super::mixed::{cadec_training_loss, CadecExample, MixedObjectiveConfig};
use super::optim::{Adam, AdamConfig};
use crate::error::{Error, Result};
use crate::model::{BaseModel, CadecModel};
use crate::tensor::{Checkpoint, Graph, ParamStore, Tensor};

/// A model whose parameters the training loop can update.
pub trait Trainable {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn checkpoint(&self) -> Checkpoint;
}

impl Trainable for BaseModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn checkpoint(&self) -> Checkpoint {
        self.to_checkpoint()
    }
}

impl Trainable for CadecModel {
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn checkpoint(&self) -> Checkpoint {
        self.to_checkpoint()
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    /// Approximate source tokens per batch.
    pub batch_tokens: usize,
    pub max_steps: u64,
    /// Dev evaluation (and checkpoint) period in steps.
    pub eval_every: u64,
    /// Evaluations without improvement in any dev metric before stopping.
    pub patience: usize,
    /// Number of most recent checkpoints averaged at the end.
    pub average_last: usize,
    pub seed: u64,
    pub time_limit: Option<Duration>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_tokens: 16000,
            max_steps: 100_000,
            eval_every: 1000,
            patience: 5,
            average_last: 5,
            seed: 1,
            time_limit: None,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevMetrics {
    pub bleu: f64,
    /// Contrastive accuracy in [0, 1], when a dev test set is available.
    pub consistency: Option<f64>,
}

/// Stops once neither BLEU nor consistency has improved for `patience`
/// consecutive evaluations.
#[derive(Debug, Clone)]
pub struct StoppingRule {
    patience: usize,
    best_bleu: f64,
    best_consistency: f64,
    stale: usize,
}

impl StoppingRule {
    pub fn new(patience: usize) -> Self {
        StoppingRule {
            patience,
            best_bleu: f64::NEG_INFINITY,
            best_consistency: f64::NEG_INFINITY,
            stale: 0,
        }
    }

    /// Records one evaluation; true when training should stop.
    pub fn observe(&mut self, m: &DevMetrics) -> bool {
        let mut improved = false;
        if m.bleu > self.best_bleu {
            self.best_bleu = m.bleu;
            improved = true;
        }
        if let Some(c) = m.consistency {
            if c > self.best_consistency {
                self.best_consistency = c;
                improved = true;
            }
        }
        if improved {
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }
}

/// Append-only `step<TAB>metric<TAB>value` log, mirrored in memory.
#[derive(Debug, Default)]
pub struct MetricLog {
    file: Option<BufWriter<File>>,
    entries: Vec<(u64, String, f64)>,
}

impl MetricLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn append_to(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(MetricLog {
            file: Some(BufWriter::new(f)),
            entries: Vec::new(),
        })
    }

    pub fn record(&mut self, step: u64, metric: &str, value: f64) -> Result<()> {
        if let Some(f) = &mut self.file {
            writeln!(f, "{step}\t{metric}\t{value}")
                .and_then(|_| f.flush())
                .map_err(|e| Error::io("metric log", e))?;
        }
        self.entries.push((step, metric.to_string(), value));
        Ok(())
    }

    pub fn entries(&self) -> &[(u64, String, f64)] {
        &self.entries
    }

    pub fn series(&self, metric: &str) -> Vec<(u64, f64)> {
        self.entries
            .iter()
            .filter(|(_, m, _)| m == metric)
            .map(|&(s, _, v)| (s, v))
            .collect()
    }
}

/// Summed loss of one batch with gradients of the summed loss.
#[derive(Debug)]
pub struct StepLoss {
    pub nll: f64,
    pub tokens: usize,
    pub grads: Vec<Option<Tensor>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Patience,
    MaxSteps,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: u64,
    pub stop: StopReason,
    pub evals: Vec<(u64, DevMetrics)>,
    /// Number of checkpoints averaged into the final parameters.
    pub averaged: usize,
    /// Dev metrics of the averaged model.
    pub final_metrics: DevMetrics,
}

fn check_finite(step: u64, loss: &StepLoss) -> Result<()> {
    let diverged = |msg: String| Err(Error::Diverged { step: step as usize, msg });
    if !loss.nll.is_finite() {
        return diverged(format!("loss is {}", loss.nll));
    }
    let bad = loss
        .grads
        .iter()
        .flatten()
        .any(|g| g.data().iter().any(|x| !x.is_finite()));
    if bad {
        return diverged("non-finite gradient".into());
    }
    Ok(())
}

/// Generic loop: token-budget batches, Adam with the warmup schedule on the
/// per-token mean loss, periodic dev evaluation with a checkpoint per
/// evaluation, the dual patience rule, and averaging of the last
/// checkpoints into `model`.
pub fn train_loop<M, L, E>(
    model: &mut M,
    lengths: &[usize],
    cfg: &TrainConfig,
    log: &mut MetricLog,
    mut loss_fn: L,
    mut eval: E,
) -> Result<TrainReport>
where
    M: Trainable,
    L: FnMut(&M, &[usize], &mut ChaCha8Rng) -> Result<StepLoss>,
    E: FnMut(&M) -> Result<DevMetrics>,
{
    if lengths.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    if cfg.eval_every == 0 || cfg.max_steps == 0 || cfg.average_last == 0 {
        return Err(Error::InvalidInput(
            "eval_every, max_steps and average_last must be positive".into(),
        ));
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut rule = StoppingRule::new(cfg.patience);
    let mut recent: VecDeque<ParamStore> = VecDeque::new();
    let mut evals = Vec::new();
    let start = Instant::now();
    let mut step = 0u64;
    let stop = 'outer: loop {
        for batch in make_batches(lengths, cfg.batch_tokens, &mut rng) {
            let loss = loss_fn(model, &batch, &mut rng)?;
            step += 1;
            check_finite(step, &loss)?;
            let tokens = loss.tokens.max(1) as f64;
            let lr = adam.update(model.params_mut(), &loss.grads, 1.0 / tokens)?;
            log.record(step, "train_loss", loss.nll / tokens)?;
            log.record(step, "lr", lr)?;

            let out_of_time = cfg.time_limit.is_some_and(|t| start.elapsed() >= t);
            let last = step >= cfg.max_steps || out_of_time;
            if step % cfg.eval_every == 0 || last {
                let m = eval(model)?;
                log.record(step, "dev_bleu", m.bleu)?;
                if let Some(c) = m.consistency {
                    log.record(step, "dev_consistency", c)?;
                }
                log::info!("step {step}: dev bleu {:.2} consistency {:?}", m.bleu, m.consistency);
                evals.push((step, m));
                if let Some(dir) = &cfg.checkpoint_dir {
                    let path = dir.join(format!("step_{step}.ckpt"));
                    model.checkpoint().with_meta("step", step).save(&path)?;
                }
                recent.push_back(model.params().clone());
                if recent.len() > cfg.average_last {
                    recent.pop_front();
                }
                if rule.observe(&m) {
                    break 'outer StopReason::Patience;
                }
            }
            if step >= cfg.max_steps {
                break 'outer StopReason::MaxSteps;
            }
            if out_of_time {
                break 'outer StopReason::TimeLimit;
            }
        }
    };
    let recent: Vec<ParamStore> = recent.into();
    let averaged = average_checkpoints(&recent)?;
    model.params_mut().load_from(&averaged)?;
    let final_metrics = eval(model)?;
    log.record(step, "final_bleu", final_metrics.bleu)?;
    if let Some(c) = final_metrics.consistency {
        log.record(step, "final_consistency", c)?;
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        model
            .checkpoint()
            .with_meta("averaged", recent.len())
            .save(&dir.join("averaged.ckpt"))?;
    }
    Ok(TrainReport {
        steps: step,
        stop,
        evals,
        averaged: recent.len(),
        final_metrics,
    })
}

/// Sentence-level maximum likelihood training of the base model on
/// tokenized (source, target) pairs.
pub fn train_base<E>(
    model: &mut BaseModel,
    pairs: &[(Vec<usize>, Vec<usize>)],
    cfg: &TrainConfig,
    log: &mut MetricLog,
    eval: E,
) -> Result<TrainReport>
where
    E: FnMut(&BaseModel) -> Result<DevMetrics>,
{
    let lengths: Vec<usize> = pairs.iter().map(|(s, _)| s.len() + 1).collect();
    let loss_fn = |m: &BaseModel, batch: &[usize], _: &mut ChaCha8Rng| -> Result<StepLoss> {
        let mut out = StepLoss {
            nll: 0.0,
            tokens: 0,
            grads: vec![None; m.params.len()],
        };
        for &i in batch {
            let (src, tgt) = &pairs[i];
            let mut g = Graph::new();
            let loss = m.loss(&mut g, src, tgt, true)?;
            out.nll += g.value(loss).item();
            out.tokens += tgt.len() + 1;
            g.backward(loss)?.accumulate_into(&m.params, &mut out.grads);
        }
        Ok(out)
    };
    train_loop(model, &lengths, cfg, log, loss_fn, eval)
}

/// CADec training under the mixed objective with a frozen base model.
pub fn train_cadec<E>(
    cadec: &mut CadecModel,
    base: &BaseModel,
    examples: &[CadecExample],
    mixed: &MixedObjectiveConfig,
    cfg: &TrainConfig,
    log: &mut MetricLog,
    eval: E,
) -> Result<TrainReport>
where
    E: FnMut(&CadecModel) -> Result<DevMetrics>,
{
    mixed.validate()?;
    let lengths: Vec<usize> = examples.iter().map(CadecExample::num_source_tokens).collect();
    let loss_fn = |m: &CadecModel, batch: &[usize], rng: &mut ChaCha8Rng| -> Result<StepLoss> {
        let refs: Vec<&CadecExample> = batch.iter().map(|&i| &examples[i]).collect();
        let l = cadec_training_loss(&refs, base, m, mixed, rng)?;
        Ok(StepLoss {
            nll: l.nll,
            tokens: l.tokens,
            grads: l.grads,
        })
    };
    train_loop(cadec, &lengths, cfg, log, loss_fn, eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn metrics(bleu: f64, c: f64) -> DevMetrics {
        DevMetrics {
            bleu,
            consistency: Some(c),
        }
    }

    #[test]
    fn stopping_needs_both_metrics_stale() {
        let mut r = StoppingRule::new(2);
        assert!(!r.observe(&metrics(10.0, 0.5)));
        assert!(!r.observe(&metrics(9.0, 0.6)));
        assert!(!r.observe(&metrics(11.0, 0.4)));
        assert!(!r.observe(&metrics(11.0, 0.6)));
        assert!(r.observe(&metrics(10.0, 0.6)));
        let mut r = StoppingRule::new(1);
        assert!(!r.observe(&DevMetrics { bleu: 1.0, consistency: None }));
        assert!(r.observe(&DevMetrics { bleu: 1.0, consistency: None }));
    }

    #[test]
    fn metric_log_appends() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.tsv");
        for v in [1.0, 2.0] {
            let mut log = MetricLog::append_to(&path).unwrap();
            log.record(3, "x", v).unwrap();
            assert_eq!(log.series("x"), vec![(3, v)]);
        }
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "3\tx\t1\n3\tx\t2\n");
    }

    #[test]
    fn copy_task_memorised() {
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            max_len: 4,
            ..ModelConfig::desk(12, 12)
        };
        let mut model = BaseModel::new(cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pairs: Vec<(Vec<usize>, Vec<usize>)> = (0..50)
            .map(|_| {
                let n = rand::Rng::gen_range(&mut rng, 1..=4);
                let s: Vec<usize> = (0..n).map(|_| rand::Rng::gen_range(&mut rng, 5..12)).collect();
                (s.clone(), s)
            })
            .collect();
        let tcfg = TrainConfig {
            adam: AdamConfig {
                warmup_steps: 100,
                scale: 0.3,
                ..AdamConfig::default()
            },
            batch_tokens: 40,
            max_steps: 1500,
            eval_every: 500,
            patience: 100,
            average_last: 1,
            ..TrainConfig::default()
        };
        let mut log = MetricLog::in_memory();
        let report = train_base(&mut model, &pairs, &tcfg, &mut log, |_| {
            Ok(DevMetrics { bleu: 0.0, consistency: None })
        })
        .unwrap();
        assert_eq!(report.stop, StopReason::MaxSteps);
        assert_eq!(report.evals.len(), 3);
        let losses = log.series("train_loss");
        assert!(losses.last().unwrap().1 < losses[0].1 * 0.1);
        let mut correct = 0;
        let mut total = 0;
        for (s, t) in &pairs {
            let lp = model.log_probs(s, t).unwrap();
            for (r, &gold) in t.iter().chain(std::iter::once(&crate::tokenizer::EOS)).enumerate() {
                let row = lp.row(r);
                let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                correct += (best == gold) as usize;
                total += 1;
            }
        }
        assert!(correct * 100 >= total * 99, "{correct}/{total}");
    }

    #[test]
    fn nan_loss_aborts() {
        let cfg = ModelConfig {
            n_layers: 1,
            n_heads: 1,
            d_model: 4,
            d_ff: 4,
            ..ModelConfig::desk(8, 8)
        };
        let mut model = BaseModel::new(cfg, 0).unwrap();
        let mut log = MetricLog::in_memory();
        let err = train_loop(
            &mut model,
            &[1, 1],
            &TrainConfig::default(),
            &mut log,
            |_, _, _| {
                Ok(StepLoss {
                    nll: f64::NAN,
                    tokens: 1,
                    grads: vec![],
                })
            },
            |_| Ok(DevMetrics { bleu: 0.0, consistency: None }),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 1, .. }));
    }
}
