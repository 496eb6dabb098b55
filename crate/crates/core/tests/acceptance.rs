//! Acceptance criteria 1–11. Runs without the libtest harness so that each
//! criterion prints exactly one PASS/FAIL line; exits non-zero on any FAIL.

mod common;

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cadec::config::Settings;
use cadec::data::{ContrastiveInstance, SynthConfig};
use cadec::evaluation::{bleu, bleu_detailed, evaluate_consistency, ConsistencyReport};
use cadec::experiment::{consistency, synthetic_experiment, SyntheticOutcome};
use cadec::inference::beam_search;
use cadec::model::BaseModel;
use cadec::tensor::{ParamStore, Tensor};
use cadec::testset_builder::{
    alternative_translations, build_deixis_instances, build_vp_ellipsis_instances, LexicalTable, MorphologyProvider,
    ToyLexicon, VpSeed, DEFAULT_TOP_K,
};
use cadec::tokenizer::{EOS, NUM_SPECIALS};
use cadec::training::{
    average_checkpoints, choose_first_pass, corrupt_reference, corruption_count, lr_at, FirstPassSource,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------- 1

fn gradient_correctness() -> Outcome {
    let t = Instant::now();
    let cases = common::op_cases();
    for (name, shapes, f) in &cases {
        let shapes: Vec<&[usize]> = shapes.iter().map(Vec::as_slice).collect();
        common::check_op(name, &shapes, f.as_ref());
    }
    for seed in common::SEEDS {
        common::check_base_micro(seed);
        common::check_cadec_micro(seed);
    }
    let el = t.elapsed();
    ensure(el < Duration::from_secs(120), format!("took {el:?}"))?;
    Ok(format!(
        "{} ops and base/CADec micro-models (N=1, d=8) over 5 seeds within rel. error {:e}, {:.1?}",
        cases.len(),
        common::TOL,
        el
    ))
}

// ---------------------------------------------------------------- 2

/// Log-softmax of random logits for every prefix that can still grow.
fn random_table(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> HashMap<Vec<usize>, Vec<f64>> {
    let mut table = HashMap::new();
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in frontier {
            let logits: Vec<f64> = (0..vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z = logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln() + m;
            table.insert(p.clone(), logits.iter().map(|l| l - z).collect());
            for t in (0..vocab).filter(|&t| t != EOS) {
                let mut q = p.clone();
                q.push(t);
                next.push(q);
            }
        }
        frontier = next;
    }
    table
}

/// Best complete or length-capped sequence by brute force.
fn exhaustive(table: &HashMap<Vec<usize>, Vec<f64>>, vocab: usize, max_len: usize) -> (Vec<usize>, f64) {
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut consider = |seq: Vec<usize>, score: f64| {
        let better = match &best {
            None => true,
            Some((b, s)) => score > *s || (score == *s && seq < *b),
        };
        if better {
            best = Some((seq, score));
        }
    };
    let mut stack = vec![(Vec::new(), 0.0)];
    while let Some((prefix, score)) = stack.pop() {
        if prefix.len() == max_len {
            consider(prefix, score);
            continue;
        }
        let lp = &table[&prefix];
        for t in 0..vocab {
            let mut seq = prefix.clone();
            seq.push(t);
            if t == EOS {
                consider(seq, score + lp[t]);
            } else {
                stack.push((seq, score + lp[t]));
            }
        }
    }
    best.unwrap()
}

fn beam_oracle() -> Outcome {
    let t = Instant::now();
    let (vocab, max_len) = (4, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for m in 0..100 {
        let table = random_table(&mut rng, vocab, max_len);
        let scorer = |p: &[usize]| -> cadec::Result<Vec<f64>> { Ok(table[p].clone()) };
        let h = beam_search(&scorer, 256, max_len).map_err(|e| e.to_string())?;
        let (seq, score) = exhaustive(&table, vocab, max_len);
        ensure(
            h.tokens == seq && (h.score - score).abs() < 1e-12,
            format!("model {m}: beam {:?} ({}) vs exhaustive {seq:?} ({score})", h.tokens, h.score),
        )?;
    }
    let el = t.elapsed();
    ensure(el < Duration::from_secs(10), format!("took {el:?}"))?;
    Ok(format!("beam 256 equals exhaustive argmax on 100 random models, {el:.1?}"))
}

// ---------------------------------------------------------------- 3

fn bleu_oracle() -> Outcome {
    let corpus = ["the cat sat on the mat", "a b c d e", "one more line here"];
    let same = bleu(&corpus, &corpus, false).map_err(|e| e.to_string())?;
    ensure(same == 100.0, format!("identical corpora gave {same}"))?;

    // sentence 1: clipped matches 5/6, 3/5, 1/4, 0/3; sentence 2: 5/5, 4/4,
    // 3/3, 2/2; equal lengths, so BP = 1
    let hyp = ["the cat sat on the mat", "a b c d e"];
    let refs = ["the cat is on the mat", "a b c d e"];
    let expected = 100.0 * ((10.0 / 11.0) * (7.0 / 9.0) * (4.0 / 7.0) * (2.0 / 5.0f64)).powf(0.25);
    let got = bleu_detailed(&hyp, &refs, false).map_err(|e| e.to_string())?;
    ensure(
        (got.score - expected).abs() < 1e-4,
        format!("hand example gave {} expected {expected}", got.score),
    )?;
    // a 5-token candidate for a 7-token reference: all precisions 1, BP = e^(1-7/5)
    let short = bleu(&["a b c d e"], &["a b c d e f g"], false).map_err(|e| e.to_string())?;
    let bp = 100.0 * (1.0 - 7.0 / 5.0f64).exp();
    ensure((short - bp).abs() < 1e-4, format!("brevity example gave {short} expected {bp}"))?;
    let zero = bleu(&["x y z w"], &["a b c d"], false).map_err(|e| e.to_string())?;
    ensure(zero == 0.0, format!("zero overlap gave {zero}"))?;
    Ok(format!("identical 100.00, hand example {:.4} (oracle {expected:.4}), BP example {short:.4}, zero overlap 0.00", got.score))
}

// ---------------------------------------------------------------- 6

fn corruption_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let vocab = 40;
    for n in 1..=50usize {
        let expected = (2 * n + 5) / 10;
        ensure(corruption_count(n, 0.2) == expected, format!("count for n={n}"))?;
        for _ in 0..200 {
            let r: Vec<usize> = (0..n).map(|_| rng.gen_range(NUM_SPECIALS..vocab)).collect();
            let c = corrupt_reference(&r, 0.2, vocab, &mut rng).map_err(|e| e.to_string())?;
            let changed = r.iter().zip(&c).filter(|(a, b)| a != b).count();
            ensure(changed == expected, format!("n={n}: {changed} changed, expected {expected}"))?;
            ensure(c.iter().all(|&t| (NUM_SPECIALS..vocab).contains(&t)), "replacement outside content vocab")?;
        }
    }
    // replaced positions are found by comparison, which is exact because a
    // replacement never equals the original
    let (n, draws) = (10, 10_000);
    let mut counts = vec![0f64; n];
    for _ in 0..draws {
        let r: Vec<usize> = (0..n).map(|_| rng.gen_range(NUM_SPECIALS..vocab)).collect();
        let c = corrupt_reference(&r, 0.2, vocab, &mut rng).map_err(|e| e.to_string())?;
        for (i, (a, b)) in r.iter().zip(&c).enumerate() {
            if a != b {
                counts[i] += 1.0;
            }
        }
    }
    let e = draws as f64 * 2.0 / n as f64;
    let stat: f64 = counts.iter().map(|o| (o - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(stat);
    ensure(p > 0.01, format!("position chi-square {stat:.2}, p = {p:.4}"))?;
    Ok(format!("counts = round(0.2n) for n=1..50, no identity replacements, positions chi2 = {stat:.2} (p = {p:.3})"))
}

// ---------------------------------------------------------------- 7

fn mixing_contract() -> Outcome {
    let draws = 10_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut parts = Vec::new();
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let k = (0..draws)
            .filter(|_| choose_first_pass(p, &mut rng) == FirstPassSource::CorruptedReference)
            .count() as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        ensure(
            (k - mean).abs() <= 3.0 * sigma,
            format!("p={p}: {k} corrupted of {draws}, bound {mean}±{}", 3.0 * sigma),
        )?;
        parts.push(format!("{p}:{:.4}", k / draws as f64));
    }
    Ok(format!("corrupted-branch frequencies {}", parts.join(" ")))
}

// ---------------------------------------------------------------- 8

fn schedule_contract() -> Outcome {
    for (warmup, scale) in [(16_000u64, 1.0), (16_000, 4.0), (200, 0.5)] {
        let peak = lr_at(warmup, warmup, scale).map_err(|e| e.to_string())?;
        let oracle = scale / (warmup as f64).sqrt();
        let ulps = (peak.to_bits() as i64 - oracle.to_bits() as i64).abs();
        ensure(ulps <= 4, format!("warmup {warmup}: {peak} vs {oracle} ({ulps} ulp)"))?;
        let lr = |s| lr_at(s, warmup, scale).unwrap();
        ensure((1..warmup).all(|s| lr(s) < lr(s + 1)), format!("warmup {warmup}: not increasing"))?;
        ensure(
            (warmup..3 * warmup).all(|s| lr(s) > lr(s + 1)),
            format!("warmup {warmup}: not decreasing"),
        )?;
    }
    Ok("peak equals scale*warmup^-0.5 within 4 ulp; strictly up then down".into())
}

// ---------------------------------------------------------------- 9

fn averaging_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let random_store = |rng: &mut ChaCha8Rng| {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(vec![3, 4], (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap());
        s.add("b", Tensor::new(vec![4], (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap());
        s
    };
    let stores: Vec<ParamStore> = (0..5).map(|_| random_store(&mut rng)).collect();
    let avg = average_checkpoints(&stores).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (name, t) in avg.iter() {
        for (i, &x) in t.data().iter().enumerate() {
            let oracle: f64 = stores.iter().map(|s| s.get(s.id(name).unwrap()).data()[i]).sum::<f64>() / 5.0;
            worst = worst.max((x - oracle).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    let same = vec![stores[0].clone(); 5];
    let id = average_checkpoints(&same).map_err(|e| e.to_string())?;
    ensure(id.bitwise_eq(&stores[0]), "averaging identical checkpoints changed them")?;
    Ok(format!("mean of 5 within {worst:.1e} of oracle; identical checkpoints reproduced bit for bit"))
}

// ---------------------------------------------------------------- 11

/// Mirrored pairs: same sources and distance, each other's truth as the
/// alternative, shared context inside each instance.
fn check_symmetric(set: &[ContrastiveInstance]) -> std::result::Result<(), String> {
    ensure(!set.is_empty() && set.len() % 2 == 0, format!("{} instances", set.len()))?;
    for (k, pair) in set.chunks(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        let n = a.true_tgt.len();
        ensure(a.src == b.src && a.distance == b.distance, format!("pair {k}: sources differ"))?;
        ensure(a.contrastive.len() == 1 && b.contrastive.len() == 1, format!("pair {k}: not binary"))?;
        ensure(
            a.contrastive[0][n - 1] == b.true_tgt[n - 1] && b.contrastive[0][n - 1] == a.true_tgt[n - 1],
            format!("pair {k}: final sentences not mirrored"),
        )?;
        ensure(a.true_tgt[n - 1] != b.true_tgt[n - 1], format!("pair {k}: identical finals"))?;
        for i in [a, b] {
            ensure(i.contrastive[0][..n - 1] == i.true_tgt[..n - 1], format!("pair {k}: context differs"))?;
            i.validate()?;
        }
    }
    Ok(())
}

fn builder_contracts() -> Outcome {
    let lex = ToyLexicon::bundled();
    // deixis: synthetic fragments (register markers are the synthetic
    // language's own, so no blocklist) plus hand-written ones
    let data = cadec::data::gen_synthetic_corpus(&SynthConfig {
        seed: 11,
        n_fragments: 10,
        n_dev_fragments: 300,
        pairs_per_distance: 5,
        ..SynthConfig::default()
    });
    let deixis = build_deixis_instances(&data.dev, &lex, &[]);
    check_symmetric(&deixis)?;
    // any scorer that sees only the final sentence gets exactly half
    let agnostic = |inst: &ContrastiveInstance, g: usize| -> cadec::Result<f64> {
        let last = inst.group(g).last().unwrap();
        Ok(last.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)) as f64)
    };
    let rep = evaluate_consistency(&agnostic, &deixis).map_err(|e| e.to_string())?;
    ensure(rep.total.correct * 2 == rep.total.count, format!("agnostic scorer {:?}", rep.total))?;

    // 0.9 / 0.1 lemma mass
    let table = LexicalTable::parse("w\tt1\t0.5\nw\tt2\t0.4\nw\tt3\t0.08\n", "example").map_err(|e| e.to_string())?;
    let lemma = |s: &str| if s == "t3" { "L2".to_string() } else { "L1".to_string() };
    let alts = alternative_translations(&table, "w", &lemma, 0.1).map_err(|e| e.to_string())?;
    ensure(
        alts.len() == 1 && alts[0].0 == "L1" && (alts[0].1 - 0.9).abs() < 1e-12,
        format!("alternatives {alts:?}"),
    )?;

    // VP ellipsis: every contrastive verb has the true verb's tags
    let do_table = LexicalTable::parse(
        "do\tdelaet\t0.3\ndo\tsdelaet\t0.2\ndo\tpostupaet\t0.15\ndo\trabotaet\t0.1\ndo\tigraet\t0.1\ndo\tslushaet\t0.05\n",
        "do",
    )
    .map_err(|e| e.to_string())?;
    let seeds = [
        ("you play chess", "ty igraesh", "I do too", "ya tozhe igrayu"),
        ("we listen", "my slushaem", "you do too", "vy tozhe slushaete"),
        ("he works", "on rabotaet", "we do too", "my tozhe rabotaem"),
    ]
    .map(|(s1, t1, s2, t2)| VpSeed {
        src: vec![s1.into(), s2.into()],
        tgt: vec![t1.into(), t2.into()],
        verb_index: 2,
        distance: Some(1),
    });
    let lemmatize = |s: &str| lex.lemma(s);
    let vp = build_vp_ellipsis_instances(&seeds, &do_table, &lemmatize, &lex, DEFAULT_TOP_K);
    ensure(vp.len() == seeds.len(), format!("{} VP instances", vp.len()))?;
    let mut groups = 0;
    for inst in &vp {
        let verb = |g: &[String]| g[1].split_whitespace().nth(2).unwrap().to_string();
        let true_verb = verb(&inst.true_tgt);
        let tags = lex.analyze(&true_verb)[0].tags.clone();
        for g in &inst.contrastive {
            let v = verb(g);
            ensure(lex.lemma(&v) != lex.lemma(&true_verb), format!("{v} shares the true lemma"))?;
            ensure(lex.analyze(&v).iter().any(|a| a.tags == tags), format!("{v} lacks tags of {true_verb}"))?;
            groups += 1;
        }
    }
    Ok(format!(
        "{} deixis instances mirrored (agnostic scorer exactly 50%), lemma mass [L1 0.9], {groups} VP alternatives tag-matched",
        deixis.len()
    ))
}

// ---------------------------------------------------------------- 4, 5, 10

const EXPERIMENT_SEEDS: [u64; 3] = [1, 2, 3];
const CADEC_P: f64 = 0.5;

struct Experiments {
    runs: Vec<(u64, SyntheticOutcome)>,
    elapsed: Duration,
}

fn run_experiments() -> std::result::Result<Experiments, String> {
    let t = Instant::now();
    let mut runs = Vec::new();
    for seed in EXPERIMENT_SEEDS {
        let synth = SynthConfig {
            seed,
            n_fragments: 2000,
            ..SynthConfig::default()
        };
        let settings = Settings {
            seed,
            ..Settings::default()
        };
        let o = synthetic_experiment(&synth, &settings, &[CADEC_P, 0.0]).map_err(|e| e.to_string())?;
        runs.push((seed, o));
    }
    Ok(Experiments {
        runs,
        elapsed: t.elapsed(),
    })
}

fn exactly_half(r: &ConsistencyReport) -> bool {
    r.total.count > 0 && r.total.correct * 2 == r.total.count
}

fn symmetry_invariant(exp: &Experiments) -> Outcome {
    let mut checked = 0;
    for (seed, o) in &exp.runs {
        let prep = &o.prepared;
        let untrained = BaseModel::new(prep.model_cfg.clone(), 1000 + seed).map_err(|e| e.to_string())?;
        let builder = build_deixis_instances(&o.data.dev, &ToyLexicon::bundled(), &[]);
        check_symmetric(&builder)?;
        for (label, model) in [("trained", &o.base_model), ("untrained", &untrained)] {
            for (set_name, set) in [
                ("synthetic deixis", &o.data.deixis_test),
                ("synthetic cohesion", &o.data.cohesion_test),
                ("builder deixis", &builder),
            ] {
                let r = consistency(prep, model, None, set, 1).map_err(|e| e.to_string())?;
                ensure(
                    exactly_half(&r),
                    format!("seed {seed} {label} base on {set_name}: {}/{}", r.total.correct, r.total.count),
                )?;
                checked += 1;
            }
        }
    }
    Ok(format!("trained and untrained base models score exactly 50.0% on {checked} symmetric sets"))
}

fn end_to_end(exp: &Experiments) -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for (seed, o) in &exp.runs {
        let (_, c) = o.cadec.iter().find(|(p, _)| *p == CADEC_P).unwrap();
        let pairs = [
            ("deixis", &o.base.deixis, &c.deixis),
            ("cohesion", &o.base.cohesion, &c.cohesion),
        ];
        let a = pairs.iter().any(|(_, b, m)| b.accuracy() <= 0.60 && m.accuracy() >= 0.85);
        let delta = c.bleu - o.base.bleu;
        let b = delta >= -0.5;
        if a && b {
            passes += 1;
        }
        lines.push(format!(
            "seed {seed}: deixis {:.1}->{:.1} cohesion {:.1}->{:.1} BLEU {:.2}->{:.2} (delta {delta:+.2}, two-sided |delta|<=0.5 {})",
            100.0 * o.base.deixis.accuracy(),
            100.0 * c.deixis.accuracy(),
            100.0 * o.base.cohesion.accuracy(),
            100.0 * c.cohesion.accuracy(),
            o.base.bleu,
            c.bleu,
            if delta.abs() <= 0.5 { "holds" } else { "fails" },
        ));
    }
    let minutes = exp.elapsed.as_secs_f64() / 60.0;
    let detail = format!("{}; {passes}/3 seeds pass; {minutes:.1} min", lines.join("; "));
    ensure(minutes <= 30.0, format!("training took {minutes:.1} min; {detail}"))?;
    ensure(passes >= 2, detail.clone())?;
    Ok(detail)
}

fn ablation_trend(exp: &Experiments) -> Outcome {
    let mut wins = 0;
    let mut lines = Vec::new();
    for (seed, o) in &exp.runs {
        let acc = |p: f64| o.cadec.iter().find(|(q, _)| *q == p).unwrap().1.cohesion.accuracy();
        let (half, zero) = (acc(CADEC_P), acc(0.0));
        if half >= zero {
            wins += 1;
        }
        lines.push(format!("seed {seed}: p=0.5 {:.1} vs p=0 {:.1}", 100.0 * half, 100.0 * zero));
    }
    let detail = format!("cohesion {}; {wins}/3 seeds with p=0.5 >= p=0", lines.join("; "));
    ensure(wins >= 2, detail.clone())?;
    Ok(detail)
}

// ----------------------------------------------------------------

fn report(id: u32, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let r = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        Err(e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match r {
        Ok(detail) => {
            println!("criterion {id:>2} {name}: PASS ({detail})");
            true
        }
        Err(detail) => {
            println!("criterion {id:>2} {name}: FAIL ({detail})");
            false
        }
    }
}

fn main() {
    // keep panic messages inside the FAIL lines
    panic::set_hook(Box::new(|_| {}));
    let mut ok = true;
    ok &= report(1, "gradient correctness", gradient_correctness);
    ok &= report(2, "beam-search oracle", beam_oracle);
    ok &= report(3, "BLEU oracle", bleu_oracle);
    let exp = run_experiments();
    let with_exp = |f: fn(&Experiments) -> Outcome| match &exp {
        Ok(e) => f(e),
        Err(msg) => Err(format!("synthetic experiment failed: {msg}")),
    };
    ok &= report(4, "symmetry invariant", || with_exp(symmetry_invariant));
    ok &= report(5, "synthetic end-to-end experiment", || with_exp(end_to_end));
    ok &= report(6, "corruption contract", corruption_contract);
    ok &= report(7, "mixing contract", mixing_contract);
    ok &= report(8, "schedule contract", schedule_contract);
    ok &= report(9, "checkpoint averaging", averaging_contract);
    ok &= report(10, "ablation trend", || with_exp(ablation_trend));
    ok &= report(11, "builder contracts", builder_contracts);
    if !ok {
        std::process::exit(1);
    }
}
