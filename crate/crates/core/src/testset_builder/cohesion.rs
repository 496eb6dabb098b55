//! Lexical tables, word alignments and named-entity cohesion instances.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::data::{ContrastiveInstance, Fragment, Phenomenon};
use crate::error::{Error, Result};

use super::morph::MorphologyProvider;

/// Word-level translation probabilities, `src -> [(tgt, p)]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LexicalTable {
    entries: BTreeMap<String, Vec<(String, f64)>>,
}

impl LexicalTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, src: &str, tgt: &str, prob: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::InvalidInput(format!("probability {prob} for {src}->{tgt}")));
        }
        let list = self.entries.entry(src.to_string()).or_default();
        let mass: f64 = list.iter().map(|(_, p)| p).sum::<f64>() + prob;
        if mass > 1.0 + 1e-9 {
            return Err(Error::InvalidInput(format!("translations of {src:?} sum to {mass}")));
        }
        list.push((tgt.to_string(), prob));
        Ok(())
    }

    pub fn translations(&self, src: &str) -> &[(String, f64)] {
        self.entries.get(src).map_or(&[], Vec::as_slice)
    }

    /// Parses `src<TAB>tgt<TAB>prob` lines.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut t = LexicalTable::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(origin, i + 1, "expected src<TAB>tgt<TAB>prob"));
            }
            let p: f64 = cols[2]
                .trim()
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, format!("bad probability {:?}", cols[2])))?;
            t.insert(cols[0], cols[1], p)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Translation mass per target lemma, largest first (ties by lemma).
pub fn lemma_masses(table: &LexicalTable, src_word: &str, lemmatize: &dyn Fn(&str) -> String) -> Vec<(String, f64)> {
    let mut mass: BTreeMap<String, f64> = BTreeMap::new();
    for (tgt, p) in table.translations(src_word) {
        *mass.entry(lemmatize(tgt)).or_default() += p;
    }
    let mut v: Vec<(String, f64)> = mass.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Lemmas whose summed translation probability is at least `min_prob`.
pub fn alternative_translations(
    table: &LexicalTable,
    src_word: &str,
    lemmatize: &dyn Fn(&str) -> String,
    min_prob: f64,
) -> Result<Vec<(String, f64)>> {
    if !(min_prob > 0.0 && min_prob <= 1.0) {
        return Err(Error::InvalidInput(format!("min_prob {min_prob} outside (0, 1]")));
    }
    Ok(lemma_masses(table, src_word, lemmatize)
        .into_iter()
        .filter(|(_, m)| *m >= min_prob - 1e-12)
        .collect())
}

/// Word alignment of one sentence pair as `(src_index, tgt_index)` links.
pub type SentenceAlignment = Vec<(usize, usize)>;

/// Parses Pharaoh alignments: one line of `i-j` links per sentence, blocks
/// of lines per fragment separated by blank lines.
pub fn parse_alignments(text: &str, origin: &str) -> Result<Vec<Vec<SentenceAlignment>>> {
    let mut out = Vec::new();
    let mut block: Vec<SentenceAlignment> = Vec::new();
    let mut in_block = false;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if in_block {
                out.push(std::mem::take(&mut block));
                in_block = false;
            }
            continue;
        }
        in_block = true;
        let mut links = Vec::new();
        for tok in line.split_whitespace() {
            let (a, b) = tok
                .split_once('-')
                .ok_or_else(|| Error::parse(origin, i + 1, format!("bad link {tok:?}")))?;
            let a = a.parse().map_err(|_| Error::parse(origin, i + 1, format!("bad link {tok:?}")))?;
            let b = b.parse().map_err(|_| Error::parse(origin, i + 1, format!("bad link {tok:?}")))?;
            links.push((a, b));
        }
        block.push(links);
    }
    if in_block {
        out.push(block);
    }
    Ok(out)
}

pub fn load_alignments(path: &Path) -> Result<Vec<Vec<SentenceAlignment>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignments(&text, &path.display().to_string())
}

/// Words ranked by corpus frequency, most frequent first.
#[derive(Debug, Clone, Default)]
pub struct FrequencyList {
    rank: HashMap<String, usize>,
}

impl FrequencyList {
    pub fn parse(text: &str) -> Self {
        let mut rank = HashMap::new();
        for (i, w) in text.lines().map(str::trim).filter(|w| !w.is_empty()).enumerate() {
            rank.entry(w.to_string()).or_insert(i);
        }
        FrequencyList { rank }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn is_top(&self, word: &str, k: usize) -> bool {
        self.rank.get(word).is_some_and(|&r| r < k)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CohesionOptions {
    /// Source words among this many most frequent ones are ignored.
    pub frequent_cutoff: usize,
    /// Minimum lemma mass for an alternative translation.
    pub min_prob: f64,
}

impl Default for CohesionOptions {
    fn default() -> Self {
        CohesionOptions {
            frequent_cutoff: 5000,
            min_prob: 0.1,
        }
    }
}

struct Mention {
    sentence: usize,
    tgt_index: usize,
}

/// Builds one instance per alternative lemma for every rare source word that
/// occurs in the final sentence and at least one context sentence and is
/// translated with a single, consistent lemma.
///
/// Context mentions stay fixed to the instance's lemma; contrastive groups
/// switch only the final-sentence mentions to another alternative.
pub fn build_cohesion_instances(
    fragments: &[Fragment],
    alignments: &[Vec<SentenceAlignment>],
    table: &LexicalTable,
    lemmatize: &dyn Fn(&str) -> String,
    freq: &FrequencyList,
    morph: &dyn MorphologyProvider,
    opts: CohesionOptions,
) -> Result<Vec<ContrastiveInstance>> {
    if alignments.len() != fragments.len() {
        return Err(Error::InvalidInput(format!(
            "{} alignment blocks for {} fragments",
            alignments.len(),
            fragments.len()
        )));
    }
    let mut out = Vec::new();
    for (f, align) in fragments.iter().zip(alignments) {
        let srcs: Vec<Vec<&str>> = f.sources().into_iter().map(|s| s.split_whitespace().collect()).collect();
        let tgts: Vec<Vec<&str>> = f.targets().into_iter().map(|s| s.split_whitespace().collect()).collect();
        let n = srcs.len();
        if align.len() != n || n < 2 {
            continue;
        }
        let mut seen = HashSet::new();
        for &word in &srcs[n - 1] {
            if !seen.insert(word) || freq.is_top(word, opts.frequent_cutoff) {
                continue;
            }
            let alts: Vec<String> = alternative_translations(table, word, lemmatize, opts.min_prob)?
                .into_iter()
                .map(|(l, _)| l)
                .collect();
            if alts.len() < 2 {
                continue;
            }
            let Some(mentions) = collect_mentions(word, &srcs, &tgts, align, &alts, lemmatize) else {
                continue;
            };
            let nearest = mentions.iter().filter(|m| m.sentence < n - 1).map(|m| m.sentence).max();
            let Some(nearest) = nearest else { continue };
            if !mentions.iter().any(|m| m.sentence == n - 1) {
                continue;
            }
            for lemma in &alts {
                let Some(truth) = render_with(&tgts, &mentions, lemma, |_| true, morph) else {
                    continue;
                };
                let mut contrastive = Vec::new();
                for other in alts.iter().filter(|l| *l != lemma) {
                    let swapped = render_with(&tgts, &mentions, other, |m| m.sentence == n - 1, morph);
                    if let Some(mut g) = swapped {
                        g[..n - 1].clone_from_slice(&truth[..n - 1]);
                        if g[n - 1] != truth[n - 1] {
                            contrastive.push(g);
                        }
                    }
                }
                if contrastive.is_empty() {
                    continue;
                }
                out.push(ContrastiveInstance {
                    phenomenon: Phenomenon::LexCohesion,
                    src: f.sources().into_iter().map(String::from).collect(),
                    true_tgt: truth,
                    contrastive,
                    distance: Some(n - 1 - nearest),
                });
            }
        }
    }
    Ok(out)
}

/// Every occurrence of `word` must align to exactly one target token whose
/// lemma is an alternative, and all occurrences must share that lemma.
fn collect_mentions(
    word: &str,
    srcs: &[Vec<&str>],
    tgts: &[Vec<&str>],
    align: &[SentenceAlignment],
    alts: &[String],
    lemmatize: &dyn Fn(&str) -> String,
) -> Option<Vec<Mention>> {
    let mut mentions = Vec::new();
    let mut lemma: Option<String> = None;
    for (s, toks) in srcs.iter().enumerate() {
        for (i, _) in toks.iter().enumerate().filter(|(_, t)| **t == word) {
            let linked: Vec<usize> = align[s]
                .iter()
                .filter(|(a, b)| *a == i && *b < tgts[s].len())
                .map(|&(_, b)| b)
                .filter(|&b| alts.contains(&lemmatize(tgts[s][b])))
                .collect();
            if linked.len() != 1 {
                return None;
            }
            let l = lemmatize(tgts[s][linked[0]]);
            if lemma.get_or_insert_with(|| l.clone()) != &l {
                return None;
            }
            mentions.push(Mention {
                sentence: s,
                tgt_index: linked[0],
            });
        }
    }
    Some(mentions)
}

fn render_with(
    tgts: &[Vec<&str>],
    mentions: &[Mention],
    lemma: &str,
    select: impl Fn(&Mention) -> bool,
    morph: &dyn MorphologyProvider,
) -> Option<Vec<String>> {
    let mut sents: Vec<Vec<String>> = tgts
        .iter()
        .map(|t| t.iter().map(|w| w.to_string()).collect())
        .collect();
    for m in mentions.iter().filter(|m| select(m)) {
        let original = tgts[m.sentence][m.tgt_index];
        let analysis = morph.analyze(original).into_iter().next()?;
        sents[m.sentence][m.tgt_index] = morph.inflect(lemma, &analysis.tags)?;
    }
    Some(sents.into_iter().map(|s| s.join(" ")).collect())
}
