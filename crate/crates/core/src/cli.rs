//! Command-line entry points.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::config::Settings;
use crate::data::{
    corpus_to_tsv, fragments_to_text, gen_synthetic_corpus, load_corpus, load_fragments, load_testset, save_testset,
    testset_to_text, ContrastiveInstance, Fragment, Phenomenon, SynthConfig,
};
use crate::evaluation::{bleu_detailed, ConsistencyReport};
use crate::experiment::{
    consistency, dev_bleu, filter_and_fragment, run_base, run_cadec, spread_pairs, train_bpe, Prepared,
};
use crate::inference::translate_document;
use crate::model::{BaseModel, CadecModel};
use crate::tensor::Checkpoint;
use crate::testset_builder::{
    build_cohesion_instances, build_deixis_instances, build_vp_ellipsis_instances, load_alignments, load_vp_seeds,
    CohesionOptions, FrequencyList, LexicalTable, MorphologyProvider, ToyLexicon, DEFAULT_MARKER_BLOCKLIST, DEFAULT_TOP_K,
};
use crate::tokenizer::BpeModel;
use crate::training::MetricLog;

pub const SRC_BPE: &str = "src.bpe";
pub const TGT_BPE: &str = "tgt.bpe";
pub const PAIRS: &str = "pairs.tsv";
pub const FRAGMENTS: &str = "fragments.txt";
pub const MODEL: &str = "model.ckpt";
pub const METRICS: &str = "metrics.tsv";
pub const MANIFEST: &str = "manifest.txt";
pub const CONFIG: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(name = "cadec", version, about = "Two-pass context-aware machine translation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a timed corpus, window it into fragments and train BPE.
    PrepareData {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: SettingsArgs,
    },
    /// Write the synthetic corpus, dev fragments and contrastive sets.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        fragments: usize,
        #[arg(long, default_value_t = 100)]
        dev_fragments: usize,
        #[arg(long, default_value_t = 50)]
        pairs_per_distance: usize,
    },
    /// Train the context-agnostic base model.
    TrainBase {
        #[command(flatten)]
        run: TrainArgs,
    },
    /// Train CADec on top of a trained base model.
    TrainCadec {
        #[command(flatten)]
        run: TrainArgs,
        #[arg(long)]
        base: PathBuf,
    },
    /// Translate groups of sentences (one per line, groups separated by blank
    /// lines).
    Translate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        cadec: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 4)]
        beam_size: usize,
    },
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        lowercase: bool,
    },
    /// Build a contrastive test set from fragments or seeds.
    BuildTestset {
        phenomenon: Phenomenon,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        fragments: Option<PathBuf>,
        /// Morphology table; the bundled toy lexicon when absent.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Comma-separated source markers that disqualify a deixis fragment.
        #[arg(long)]
        blocklist: Option<String>,
        #[arg(long)]
        alignments: Option<PathBuf>,
        #[arg(long)]
        lex_table: Option<PathBuf>,
        #[arg(long)]
        freq_list: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        frequent_cutoff: usize,
        #[arg(long, default_value_t = 0.1)]
        min_prob: f64,
        #[arg(long)]
        seeds: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
    },
    /// Contrastive consistency accuracy of a model on a test set.
    EvalConsistency {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        cadec: Option<PathBuf>,
        #[arg(long, required = true)]
        testset: Vec<PathBuf>,
        #[arg(long, default_value_t = 4)]
        beam_size: usize,
        /// Directory for the TSV report and manifest.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train one CADec per corruption probability and report BLEU and
    /// consistency accuracies.
    AblateP {
        /// Comma-separated probabilities, e.g. 0,0.25,0.5,0.75,1.
        list: String,
        #[command(flatten)]
        run: TrainArgs,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        testset: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by prepare-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Dev fragments for BLEU.
    #[arg(long)]
    pub dev: PathBuf,
    /// Dev contrastive sets for consistency accuracy.
    #[arg(long)]
    pub dev_testset: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub settings: SettingsArgs,
}

/// `--config FILE` plus one optional flag per setting.
#[derive(Debug, Args, Default)]
pub struct SettingsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    #[arg(long)]
    pub max_context: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub warmup_steps: Option<u64>,
    #[arg(long)]
    pub lr_scale: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub batch_tokens: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub eval_every: Option<u64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub average_last: Option<usize>,
    #[arg(long)]
    pub time_limit_secs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub corruption_rate: Option<f64>,
    #[arg(long)]
    pub beam_size: Option<usize>,
    #[arg(long)]
    pub min_overlap: Option<f64>,
    #[arg(long)]
    pub max_gap: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub bpe_merges: Option<usize>,
    #[arg(long)]
    pub dev_instances: Option<usize>,
}

impl SettingsArgs {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(T::to_string)
        }
        vec![
            ("n-layers", s(&self.n_layers)),
            ("n-heads", s(&self.n_heads)),
            ("d-model", s(&self.d_model)),
            ("d-ff", s(&self.d_ff)),
            ("max-context", s(&self.max_context)),
            ("max-len", s(&self.max_len)),
            ("warmup-steps", s(&self.warmup_steps)),
            ("lr-scale", s(&self.lr_scale)),
            ("beta1", s(&self.beta1)),
            ("beta2", s(&self.beta2)),
            ("adam-eps", s(&self.adam_eps)),
            ("batch-tokens", s(&self.batch_tokens)),
            ("max-steps", s(&self.max_steps)),
            ("eval-every", s(&self.eval_every)),
            ("patience", s(&self.patience)),
            ("average-last", s(&self.average_last)),
            ("time-limit-secs", s(&self.time_limit_secs)),
            ("seed", s(&self.seed)),
            ("p", s(&self.p)),
            ("corruption-rate", s(&self.corruption_rate)),
            ("beam-size", s(&self.beam_size)),
            ("min-overlap", s(&self.min_overlap)),
            ("max-gap", s(&self.max_gap)),
            ("window", s(&self.window)),
            ("bpe-merges", s(&self.bpe_merges)),
            ("dev-instances", s(&self.dev_instances)),
        ]
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> anyhow::Result<Settings> {
        let mut s = match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        };
        for (k, v) in self.overrides() {
            if let Some(v) = v {
                s.set(k, &v)?;
            }
        }
        Ok(s)
    }
}

/// Records what produced a run directory.
fn write_manifest(dir: &Path, command: &str, settings: Option<&Settings>, extra: &[(&str, String)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut m = String::new();
    let args: Vec<String> = std::env::args().collect();
    let _ = writeln!(m, "command={command}");
    let _ = writeln!(m, "args={}", args.join(" "));
    let _ = writeln!(m, "version={}", env!("CARGO_PKG_VERSION"));
    for (k, v) in extra {
        let _ = writeln!(m, "{k}={v}");
    }
    if let Some(s) = settings {
        let _ = writeln!(m, "seed={}", s.seed);
        for (k, v) in s.to_kv() {
            let _ = writeln!(m, "setting.{k}={v}");
        }
        fs::write(dir.join(CONFIG), s.to_text())?;
    }
    fs::write(dir.join(MANIFEST), m)?;
    Ok(())
}

fn load_bpe(data: &Path) -> anyhow::Result<(BpeModel, BpeModel)> {
    Ok((BpeModel::load(&data.join(SRC_BPE))?, BpeModel::load(&data.join(TGT_BPE))?))
}

fn load_base(path: &Path) -> anyhow::Result<BaseModel> {
    Ok(BaseModel::from_checkpoint(&Checkpoint::load(path)?)?)
}

fn load_cadec(path: &Path) -> anyhow::Result<CadecModel> {
    Ok(CadecModel::from_checkpoint(&Checkpoint::load(path)?)?)
}

fn load_sets(paths: &[PathBuf]) -> anyhow::Result<Vec<Vec<ContrastiveInstance>>> {
    paths.iter().map(|p| Ok(load_testset(p)?)).collect()
}

/// Prepared training material from a prepare-data directory.
fn prepared(run: &TrainArgs, settings: &Settings) -> anyhow::Result<Prepared> {
    let (src_bpe, tgt_bpe) = load_bpe(&run.data)?;
    let pairs = load_corpus(&run.data.join(PAIRS))?;
    let fragments = load_fragments(&run.data.join(FRAGMENTS))?;
    let dev = load_fragments(&run.dev)?;
    let mut dev_sets = Vec::new();
    for set in load_sets(&run.dev_testset)? {
        dev_sets.extend(spread_pairs(&set, settings.dev_instances));
    }
    Ok(Prepared::new(src_bpe, tgt_bpe, settings, &pairs, fragments, dev, dev_sets))
}

/// Parses groups of lines separated by blank lines.
pub fn parse_groups(text: &str) -> Vec<Vec<String>> {
    let mut groups = Vec::new();
    let mut cur = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                groups.push(std::mem::take(&mut cur));
            }
        } else {
            cur.push(line.trim().to_string());
        }
    }
    if !cur.is_empty() {
        groups.push(cur);
    }
    groups
}

fn parse_p_list(list: &str) -> anyhow::Result<Vec<f64>> {
    let ps = list
        .split(',')
        .map(|x| x.trim().parse::<f64>().with_context(|| format!("bad probability {x:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if ps.is_empty() || ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
        bail!("probabilities must be a non-empty list in [0, 1]");
    }
    Ok(ps)
}

/// One row of the ablation report.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub p: f64,
    pub bleu: f64,
    pub reports: Vec<ConsistencyReport>,
}

pub fn ablation_tsv(rows: &[AblationRow]) -> String {
    let mut s = String::from("p\tbleu");
    if let Some(r) = rows.first() {
        for rep in &r.reports {
            let name = rep.phenomenon.map_or("mixed".to_string(), |p| p.to_string());
            let _ = write!(s, "\t{name}");
        }
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{}\t{:.2}", r.p, r.bleu);
        for rep in &r.reports {
            let _ = write!(s, "\t{:.1}", 100.0 * rep.accuracy());
        }
        s.push('\n');
    }
    s
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let tsv = ablation_tsv(rows);
    tsv.lines()
        .map(|l| l.split('\t').map(|c| format!("{c:>14}")).collect::<String>() + "\n")
        .collect()
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenSynth {
            out,
            seed,
            fragments,
            dev_fragments,
            pairs_per_distance,
        } => {
            let cfg = SynthConfig {
                seed,
                n_fragments: fragments,
                n_dev_fragments: dev_fragments,
                pairs_per_distance,
                ..SynthConfig::default()
            };
            let data = gen_synthetic_corpus(&cfg);
            fs::create_dir_all(&out)?;
            fs::write(out.join("train.tsv"), corpus_to_tsv(&data.train))?;
            fs::write(out.join("dev.txt"), fragments_to_text(&data.dev))?;
            save_testset(&out.join("deixis_dev.txt"), &data.deixis_dev)?;
            save_testset(&out.join("deixis_test.txt"), &data.deixis_test)?;
            save_testset(&out.join("lex_cohesion_dev.txt"), &data.cohesion_dev)?;
            save_testset(&out.join("lex_cohesion_test.txt"), &data.cohesion_test)?;
            write_manifest(
                &out,
                "gen-synth",
                None,
                &[("seed", seed.to_string()), ("fragments", fragments.to_string())],
            )?;
            println!("wrote synthetic data to {}", out.display());
        }
        Command::PrepareData { corpus, out, settings } => {
            let s = settings.resolve()?;
            let pairs = load_corpus(&corpus)?;
            let (kept, fragments) = filter_and_fragment(&pairs, &s)?;
            if kept.is_empty() {
                bail!("no pairs left after filtering");
            }
            let (src_bpe, tgt_bpe) = train_bpe(&kept, s.bpe_merges)?;
            fs::create_dir_all(&out)?;
            src_bpe.save(&out.join(SRC_BPE))?;
            tgt_bpe.save(&out.join(TGT_BPE))?;
            fs::write(out.join(PAIRS), corpus_to_tsv(&kept))?;
            fs::write(out.join(FRAGMENTS), fragments_to_text(&fragments))?;
            write_manifest(
                &out,
                "prepare-data",
                Some(&s),
                &[
                    ("corpus", corpus.display().to_string()),
                    ("pairs_kept", kept.len().to_string()),
                    ("pairs_total", pairs.len().to_string()),
                    ("fragments", fragments.len().to_string()),
                ],
            )?;
            println!(
                "kept {} of {} pairs, {} fragments, vocab {}/{}",
                kept.len(),
                pairs.len(),
                fragments.len(),
                src_bpe.vocab_size(),
                tgt_bpe.vocab_size()
            );
        }
        Command::TrainBase { run: args } => {
            let s = args.settings.resolve()?;
            let prep = prepared(&args, &s)?;
            write_manifest(&args.out, "train-base", Some(&s), &[("metric_log", METRICS.into())])?;
            let mut log = MetricLog::append_to(&args.out.join(METRICS))?;
            let (base, report) = run_base(&prep, &s, Some(args.out.join("checkpoints")), &mut log)?;
            base.to_checkpoint().save(&args.out.join(MODEL))?;
            println!(
                "trained {} steps ({:?}), dev BLEU {:.2}",
                report.steps, report.stop, report.final_metrics.bleu
            );
        }
        Command::TrainCadec { run: args, base } => {
            let s = args.settings.resolve()?;
            let prep = prepared(&args, &s)?;
            let base_model = load_base(&base)?;
            write_manifest(
                &args.out,
                "train-cadec",
                Some(&s),
                &[("metric_log", METRICS.into()), ("base", base.display().to_string())],
            )?;
            let mut log = MetricLog::append_to(&args.out.join(METRICS))?;
            let examples = prep.cadec_examples(&base_model)?;
            let (cadec, report) = run_cadec(
                &prep,
                &s,
                &base_model,
                &examples,
                s.p,
                Some(args.out.join("checkpoints")),
                &mut log,
            )?;
            cadec.to_checkpoint().save(&args.out.join(MODEL))?;
            println!(
                "trained {} steps ({:?}), dev BLEU {:.2}, dev consistency {:?}",
                report.steps, report.stop, report.final_metrics.bleu, report.final_metrics.consistency
            );
        }
        Command::Translate {
            data,
            base,
            cadec,
            input,
            output,
            beam_size,
        } => {
            let (src_bpe, tgt_bpe) = load_bpe(&data)?;
            let base_model = load_base(&base)?;
            let cadec_model = cadec.as_deref().map(load_cadec).transpose()?;
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let mut out = String::new();
            for (i, group) in parse_groups(&text).iter().enumerate() {
                let srcs: Vec<Vec<usize>> = group
                    .iter()
                    .map(|s| {
                        let mut v = src_bpe.encode(s);
                        v.truncate(base_model.cfg.max_len);
                        v
                    })
                    .collect();
                let tr = translate_document(&base_model, cadec_model.as_ref(), &srcs, beam_size)?;
                if i > 0 {
                    out.push('\n');
                }
                for ids in &tr.sentences {
                    out.push_str(&tgt_bpe.decode_clean(ids)?);
                    out.push('\n');
                }
            }
            fs::write(&output, out)?;
            let dir = output.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let name = output.file_name().map_or("translation".into(), |n| n.to_string_lossy().to_string());
            let manifest_dir = dir.join(format!("{name}.run"));
            write_manifest(
                &manifest_dir,
                "translate",
                None,
                &[("beam_size", beam_size.to_string()), ("output", output.display().to_string())],
            )?;
        }
        Command::Bleu {
            hyp,
            reference,
            lowercase,
        } => {
            let h = fs::read_to_string(&hyp).with_context(|| format!("reading {}", hyp.display()))?;
            let r = fs::read_to_string(&reference).with_context(|| format!("reading {}", reference.display()))?;
            let h: Vec<&str> = h.lines().collect();
            let r: Vec<&str> = r.lines().collect();
            let b = bleu_detailed(&h, &r, lowercase)?;
            println!(
                "BLEU = {:.2}, {:.1}/{:.1}/{:.1}/{:.1} (BP={:.3}, hyp_len={}, ref_len={})",
                b.score,
                100.0 * b.precisions[0],
                100.0 * b.precisions[1],
                100.0 * b.precisions[2],
                100.0 * b.precisions[3],
                b.brevity_penalty,
                b.hyp_len,
                b.ref_len
            );
        }
        Command::BuildTestset {
            phenomenon,
            out,
            fragments,
            lexicon,
            blocklist,
            alignments,
            lex_table,
            freq_list,
            frequent_cutoff,
            min_prob,
            seeds,
            top_k,
        } => {
            let lex = match &lexicon {
                Some(p) => ToyLexicon::load(p)?,
                None => ToyLexicon::bundled(),
            };
            let need = |o: &Option<PathBuf>, flag: &str| -> anyhow::Result<PathBuf> {
                o.clone().with_context(|| format!("{phenomenon} needs --{flag}"))
            };
            let lemmatize = |w: &str| lex.lemma(w);
            let instances = match phenomenon {
                Phenomenon::Deixis => {
                    let frags: Vec<Fragment> = load_fragments(&need(&fragments, "fragments")?)?;
                    let custom: Vec<String> = blocklist
                        .as_deref()
                        .map(|b| b.split(',').map(|w| w.trim().to_string()).collect())
                        .unwrap_or_default();
                    let block: Vec<&str> = if blocklist.is_some() {
                        custom.iter().map(String::as_str).collect()
                    } else {
                        DEFAULT_MARKER_BLOCKLIST.to_vec()
                    };
                    build_deixis_instances(&frags, &lex, &block)
                }
                Phenomenon::LexCohesion => {
                    let frags = load_fragments(&need(&fragments, "fragments")?)?;
                    let al = load_alignments(&need(&alignments, "alignments")?)?;
                    let table = LexicalTable::load(&need(&lex_table, "lex-table")?)?;
                    let freq = FrequencyList::load(&need(&freq_list, "freq-list")?)?;
                    let opts = CohesionOptions {
                        frequent_cutoff,
                        min_prob,
                    };
                    build_cohesion_instances(&frags, &al, &table, &lemmatize, &freq, &lex, opts)?
                }
                Phenomenon::EllipsisVp => {
                    let seeds = load_vp_seeds(&need(&seeds, "seeds")?)?;
                    let table = LexicalTable::load(&need(&lex_table, "lex-table")?)?;
                    build_vp_ellipsis_instances(&seeds, &table, &lemmatize, &lex, top_k)
                }
                Phenomenon::EllipsisInfl => {
                    bail!("ellipsis_infl instances require manual annotation and cannot be built automatically")
                }
            };
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            fs::write(&out, testset_to_text(&instances))?;
            println!("wrote {} {phenomenon} instances to {}", instances.len(), out.display());
        }
        Command::EvalConsistency {
            data,
            base,
            cadec,
            testset,
            beam_size,
            report,
        } => {
            let (src_bpe, tgt_bpe) = load_bpe(&data)?;
            let base_model = load_base(&base)?;
            let cadec_model = cadec.as_deref().map(load_cadec).transpose()?;
            let settings = Settings {
                beam_size,
                max_len: base_model.cfg.max_len,
                ..Settings::default()
            };
            let prep = Prepared::new(src_bpe, tgt_bpe, &settings, &[], Vec::new(), Vec::new(), Vec::new());
            let mut tsv = String::new();
            for (path, set) in testset.iter().zip(load_sets(&testset)?) {
                let rep = consistency(&prep, &base_model, cadec_model.as_ref(), &set, beam_size)?;
                println!("{}", path.display());
                print!("{}", rep.to_table());
                tsv.push_str(&rep.to_tsv());
            }
            if let Some(dir) = report {
                write_manifest(&dir, "eval-consistency", None, &[("beam_size", beam_size.to_string())])?;
                fs::write(dir.join("consistency.tsv"), tsv)?;
            }
        }
        Command::AblateP {
            list,
            run: args,
            base,
            testset,
        } => {
            let ps = parse_p_list(&list)?;
            let s = args.settings.resolve()?;
            let prep = prepared(&args, &s)?;
            let base_model = load_base(&base)?;
            let sets = load_sets(&testset)?;
            write_manifest(
                &args.out,
                "ablate-p",
                Some(&s),
                &[("p_list", list.clone()), ("base", base.display().to_string())],
            )?;
            let examples = prep.cadec_examples(&base_model)?;
            let mut rows = Vec::new();
            for p in ps {
                let dir = args.out.join(format!("p_{p}"));
                fs::create_dir_all(&dir)?;
                let mut log = MetricLog::append_to(&dir.join(METRICS))?;
                let (cadec, _) = run_cadec(&prep, &s, &base_model, &examples, p, Some(dir.join("checkpoints")), &mut log)?;
                cadec.to_checkpoint().save(&dir.join(MODEL))?;
                let bleu = dev_bleu(&prep, &base_model, Some(&cadec), s.beam_size)?;
                let reports = sets
                    .iter()
                    .map(|set| consistency(&prep, &base_model, Some(&cadec), set, s.beam_size))
                    .collect::<crate::Result<Vec<_>>>()?;
                rows.push(AblationRow { p, bleu, reports });
                fs::write(args.out.join("ablation.tsv"), ablation_tsv(&rows))?;
            }
            print!("{}", ablation_table(&rows));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, "d-model=16\nseed=7\n").unwrap();
        let cli = Cli::try_parse_from([
            "cadec", "train-base", "--data", "d", "--dev", "dev", "--out", "o", "--config",
            path.to_str().unwrap(), "--seed", "9",
        ])
        .unwrap();
        let Command::TrainBase { run } = cli.command else { panic!() };
        let s = run.settings.resolve().unwrap();
        assert_eq!((s.d_model, s.seed), (16, 9));
    }

    #[test]
    fn unknown_command_is_rejected() {
        assert!(Cli::try_parse_from(["cadec", "frobnicate"]).is_err());
        assert!(Cli::try_parse_from(["cadec", "build-testset", "bogus", "--out", "x"]).is_err());
    }

    #[test]
    fn groups_and_p_lists() {
        assert_eq!(parse_groups("a\nb\n\n\nc\n"), vec![vec!["a", "b"], vec!["c"]]);
        assert_eq!(parse_p_list("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_p_list("0.5,2").is_err());
    }
}
