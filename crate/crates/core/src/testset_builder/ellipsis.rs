//! VP-ellipsis instances: the target verb that the source leaves implicit
//! is replaced by other frequent translations of "do".

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{ContrastiveInstance, Phenomenon};
use crate::error::{Error, Result};

use super::cohesion::{lemma_masses, LexicalTable};
use super::morph::MorphologyProvider;

pub const DO_VERB: &str = "do";
pub const DEFAULT_TOP_K: usize = 10;

/// A context-plus-current example whose final target sentence contains the
/// verb at `verb_index` (whitespace token index).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VpSeed {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub verb_index: usize,
    pub distance: Option<usize>,
}

/// Seed file: blocks with a `# verb=<i> distance=<d|na>` header followed by
/// `S<i>` and `T<i>` lines.
pub fn parse_vp_seeds(text: &str, origin: &str) -> Result<Vec<VpSeed>> {
    let mut out = Vec::new();
    let mut cur: Option<VpSeed> = None;
    let finish = |seed: Option<VpSeed>, line: usize, out: &mut Vec<VpSeed>| -> Result<()> {
        if let Some(s) = seed {
            if s.src.is_empty() || s.src.len() != s.tgt.len() {
                return Err(Error::parse(origin, line, "seed needs matching S and T lines"));
            }
            out.push(s);
        }
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim_end();
        if line.is_empty() {
            finish(cur.take(), ln, &mut out)?;
            continue;
        }
        if let Some(header) = line.strip_prefix('#') {
            finish(cur.take(), ln, &mut out)?;
            let mut verb = None;
            let mut distance = None;
            for kv in header.split_whitespace() {
                match kv.split_once('=') {
                    Some(("verb", v)) => verb = v.parse().ok(),
                    Some(("distance", "na")) => distance = None,
                    Some(("distance", d)) => {
                        distance = Some(d.parse().map_err(|_| Error::parse(origin, ln, "bad distance"))?)
                    }
                    _ => return Err(Error::parse(origin, ln, format!("unknown header field {kv:?}"))),
                }
            }
            let verb_index = verb.ok_or_else(|| Error::parse(origin, ln, "missing verb=<index>"))?;
            cur = Some(VpSeed {
                src: Vec::new(),
                tgt: Vec::new(),
                verb_index,
                distance,
            });
            continue;
        }
        let seed = cur
            .as_mut()
            .ok_or_else(|| Error::parse(origin, ln, "sentence line before header"))?;
        let (tag, text) = line.split_once(' ').unwrap_or((line, ""));
        match tag.chars().next() {
            Some('S') => seed.src.push(text.to_string()),
            Some('T') => seed.tgt.push(text.to_string()),
            _ => return Err(Error::parse(origin, ln, format!("unknown record {tag:?}"))),
        }
    }
    let end = text.lines().count() + 1;
    finish(cur.take(), end, &mut out)?;
    Ok(out)
}

pub fn vp_seeds_to_text(seeds: &[VpSeed]) -> String {
    let mut s = String::new();
    for (k, seed) in seeds.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        let d = seed.distance.map_or("na".to_string(), |d| d.to_string());
        let _ = writeln!(s, "# verb={} distance={d}", seed.verb_index);
        for (i, x) in seed.src.iter().enumerate() {
            let _ = writeln!(s, "S{} {x}", i + 1);
        }
        for (i, x) in seed.tgt.iter().enumerate() {
            let _ = writeln!(s, "T{} {x}", i + 1);
        }
    }
    s
}

pub fn load_vp_seeds(path: &Path) -> Result<Vec<VpSeed>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_vp_seeds(&text, &path.display().to_string())
}

/// Replaces the marked verb with each of the top-`k` lemmas translating
/// "do" (other than its own), inflected with the original verb's tags.
/// Candidates that cannot be inflected are skipped; seeds left without any
/// contrastive group are dropped.
pub fn build_vp_ellipsis_instances(
    seeds: &[VpSeed],
    table: &LexicalTable,
    lemmatize: &dyn Fn(&str) -> String,
    morph: &dyn MorphologyProvider,
    k: usize,
) -> Vec<ContrastiveInstance> {
    let top: Vec<String> = lemma_masses(table, DO_VERB, lemmatize)
        .into_iter()
        .take(k)
        .map(|(l, _)| l)
        .collect();
    let mut out = Vec::new();
    for seed in seeds {
        let Some(last) = seed.tgt.last() else { continue };
        let tokens: Vec<&str> = last.split_whitespace().collect();
        let Some(&verb) = tokens.get(seed.verb_index) else {
            log::warn!("seed verb index {} out of range in {last:?}", seed.verb_index);
            continue;
        };
        let Some(analysis) = morph.analyze(verb).into_iter().find(|a| a.tags.has("VERB")) else {
            log::warn!("{verb:?} has no verb analysis");
            continue;
        };
        let mut contrastive = Vec::new();
        for lemma in top.iter().filter(|l| **l != analysis.lemma) {
            let Some(form) = morph.inflect(lemma, &analysis.tags) else {
                log::warn!("cannot inflect {lemma} as {}", analysis.tags);
                continue;
            };
            let mut toks: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
            toks[seed.verb_index] = form;
            let mut group = seed.tgt.clone();
            *group.last_mut().unwrap() = toks.join(" ");
            if group != seed.tgt {
                contrastive.push(group);
            }
        }
        if contrastive.is_empty() {
            continue;
        }
        out.push(ContrastiveInstance {
            phenomenon: Phenomenon::EllipsisVp,
            src: seed.src.clone(),
            true_tgt: seed.tgt.clone(),
            contrastive,
            distance: seed.distance,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testset_builder::morph::ToyLexicon;

    fn do_table() -> LexicalTable {
        LexicalTable::parse(
            "do\tdelaet\t0.3\ndo\tsdelaet\t0.2\ndo\tpostupaet\t0.15\ndo\ttvorit\t0.1\ndo\trabotaet\t0.1\ndo\tigraet\t0.05\n",
            "mem",
        )
        .unwrap()
    }

    fn seed() -> VpSeed {
        VpSeed {
            src: vec!["you play chess".into(), "I do too".into()],
            tgt: vec!["ty igraesh".into(), "ya tozhe igrayu".into()],
            verb_index: 2,
            distance: Some(1),
        }
    }

    #[test]
    fn contrastive_verbs_keep_the_inflection() {
        let lex = ToyLexicon::bundled();
        let lemmatize = |s: &str| lex.lemma(s);
        let inst = build_vp_ellipsis_instances(&[seed()], &do_table(), &lemmatize, &lex, DEFAULT_TOP_K);
        assert_eq!(inst.len(), 1);
        let i = &inst[0];
        i.validate().unwrap();
        // six lemmas, minus the true one, minus the uninflectable one
        assert_eq!(i.contrastive.len(), 4);
        let true_tags = &lex.analyze("igrayu")[0].tags;
        for g in &i.contrastive {
            let verb = g[1].split_whitespace().nth(2).unwrap();
            assert_eq!(&lex.analyze(verb)[0].tags, true_tags);
        }
    }

    #[test]
    fn top_one_equal_to_truth_drops_the_seed() {
        let lex = ToyLexicon::bundled();
        let lemmatize = |s: &str| lex.lemma(s);
        let mut s = seed();
        s.tgt[1] = "ya tozhe delayu".into();
        assert!(build_vp_ellipsis_instances(&[s], &do_table(), &lemmatize, &lex, 1).is_empty());
    }

    #[test]
    fn seed_file_round_trip() {
        let seeds = vec![seed(), VpSeed { distance: None, ..seed() }];
        let text = vp_seeds_to_text(&seeds);
        assert_eq!(parse_vp_seeds(&text, "mem").unwrap(), seeds);
        assert!(parse_vp_seeds("S1 x\n", "mem").is_err());
        assert!(parse_vp_seeds("# verb=1\nS1 a\n", "mem").is_err());
    }
}
