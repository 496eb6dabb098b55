//! Byte-pair encoding with a subword-nmt style `@@` continuation marker.
//!
//! Words are split into characters; every symbol that is not the last of
//! its word carries the `@@` suffix, so word boundaries survive encoding
//! and `decode` is a plain join. Merges are learned greedily by pair count
//! with ties going to the lexicographically smallest pair.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const CONTINUATION: &str = "@@";

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SEP: usize = 4;
pub const NUM_SPECIALS: usize = 5;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<s>", "</s>", "<unk>", "<sep>"];

pub fn is_special(id: usize) -> bool {
    id < NUM_SPECIALS
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    tokens: Vec<String>,
    vocab: HashMap<String, usize>,
}

fn word_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let n = chars.len();
    chars
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            if i + 1 < n {
                format!("{c}{CONTINUATION}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn join_pair(left: &str, right: &str) -> String {
    let stem = left.strip_suffix(CONTINUATION).unwrap_or(left);
    format!("{stem}{right}")
}

fn apply_merge(symbols: &mut Vec<String>, left: &str, right: &str, merged: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            symbols[i] = merged.to_string();
            symbols.remove(i + 1);
        }
        i += 1;
    }
}

impl BpeModel {
    /// Learns up to `num_merges` merges from whitespace-tokenized lines.
    pub fn train<S: AsRef<str>>(corpus: &[S], num_merges: usize) -> Result<Self> {
        let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
        for line in corpus {
            for w in line.as_ref().split_whitespace() {
                *word_counts.entry(w).or_default() += 1;
            }
        }
        if word_counts.is_empty() {
            return Err(Error::InvalidInput("cannot train BPE on an empty corpus".into()));
        }
        let mut words: Vec<(Vec<String>, usize)> = word_counts
            .iter()
            .map(|(w, &c)| (word_symbols(w), c))
            .collect();

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut vocab: HashMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        let mut initial: Vec<&String> = words.iter().flat_map(|(s, _)| s.iter()).collect();
        initial.sort();
        initial.dedup();
        let initial: Vec<String> = initial.into_iter().cloned().collect();
        for s in initial {
            if !vocab.contains_key(&s) {
                vocab.insert(s.clone(), tokens.len());
                tokens.push(s);
            }
        }

        let mut merges = Vec::new();
        for _ in 0..num_merges {
            let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
            for (syms, c) in &words {
                for pair in syms.windows(2) {
                    *counts.entry((&pair[0], &pair[1])).or_default() += c;
                }
            }
            // BTreeMap iterates in lexicographic pair order, so keeping the
            // first maximum implements the tie-break.
            let mut best: Option<((&str, &str), usize)> = None;
            for (&pair, &c) in &counts {
                if SPECIAL_TOKENS.contains(&join_pair(pair.0, pair.1).as_str()) {
                    continue;
                }
                if best.is_none_or(|(_, bc)| c > bc) {
                    best = Some((pair, c));
                }
            }
            let Some(((l, r), _)) = best else { break };
            let (l, r) = (l.to_string(), r.to_string());
            let merged = join_pair(&l, &r);
            for (syms, _) in words.iter_mut() {
                apply_merge(syms, &l, &r, &merged);
            }
            if !vocab.contains_key(&merged) {
                vocab.insert(merged.clone(), tokens.len());
                tokens.push(merged);
            }
            merges.push((l, r));
        }
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Ok(BpeModel {
            merges,
            ranks,
            tokens,
            vocab,
        })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.vocab.get(token).copied()
    }

    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut syms = word_symbols(word);
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0].clone(), p[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let (l, r) = &self.merges[rank];
            let merged = join_pair(l, r);
            apply_merge(&mut syms, l, r, &merged);
        }
        syms
    }

    /// Subword strings for `text`, with continuation markers.
    pub fn segment(&self, text: &str) -> Vec<String> {
        text.split_whitespace()
            .flat_map(|w| self.segment_word(w))
            .collect()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.segment(text)
            .iter()
            .map(|s| self.id(s).unwrap_or(UNK))
            .collect()
    }

    /// Joins subwords back into text. `<unk>` stays visible in the output.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::new();
        let mut glue = false;
        for &id in ids {
            let tok = self.token(id).ok_or(Error::UnknownId(id))?;
            if !out.is_empty() && !glue {
                out.push(' ');
            }
            match tok.strip_suffix(CONTINUATION) {
                Some(stem) if !is_special(id) => {
                    out.push_str(stem);
                    glue = true;
                }
                _ => {
                    out.push_str(tok);
                    glue = false;
                }
            }
        }
        Ok(out)
    }

    /// Like [`decode`](Self::decode) but drops BOS/EOS/PAD.
    pub fn decode_clean(&self, ids: &[usize]) -> Result<String> {
        let kept: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&i| !matches!(i, PAD | BOS | EOS))
            .collect();
        self.decode(&kept)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "#bpe version=1 marker={CONTINUATION} merges={} vocab={} specials={NUM_SPECIALS}\n",
            self.merges.len(),
            self.tokens.len()
        );
        for (l, r) in &self.merges {
            let _ = writeln!(s, "{l} {r}");
        }
        for (i, t) in self.tokens.iter().enumerate() {
            let _ = writeln!(s, "{t}\t{i}");
        }
        s
    }

    pub fn from_text(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty model file"))?;
        let mut n_merges = None;
        let mut n_vocab = None;
        for field in header.split_whitespace().skip(1) {
            match field.split_once('=') {
                Some(("merges", v)) => n_merges = v.parse::<usize>().ok(),
                Some(("vocab", v)) => n_vocab = v.parse::<usize>().ok(),
                Some(("marker", m)) if m != CONTINUATION => {
                    return Err(Error::parse(origin, 1, format!("unsupported marker {m}")))
                }
                _ => {}
            }
        }
        let (Some(n_merges), Some(n_vocab)) = (n_merges, n_vocab) else {
            return Err(Error::parse(origin, 1, "header needs merges= and vocab="));
        };
        let mut merges = Vec::with_capacity(n_merges);
        for _ in 0..n_merges {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, "missing merge lines"))?;
            let (l, r) = line
                .split_once(' ')
                .ok_or_else(|| Error::parse(origin, i + 1, "merge line needs two symbols"))?;
            merges.push((l.to_string(), r.to_string()));
        }
        let mut tokens = vec![String::new(); n_vocab];
        let mut vocab = HashMap::new();
        for _ in 0..n_vocab {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, "missing vocabulary lines"))?;
            let (t, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::parse(origin, i + 1, "vocab line needs token<TAB>id"))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(origin, i + 1, "bad id"))?;
            if id >= n_vocab || vocab.insert(t.to_string(), id).is_some() {
                return Err(Error::parse(origin, i + 1, "bad or duplicate vocab entry"));
            }
            tokens[id] = t.to_string();
        }
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::parse(origin, 0, format!("special {s} must have id {i}")));
            }
        }
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        Ok(BpeModel {
            merges,
            ranks,
            tokens,
            vocab,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(BpeModel::train::<&str>(&[], 3).is_err());
        assert!(BpeModel::train(&["   "], 3).is_err());
    }

    #[test]
    fn first_merge_is_most_frequent_pair() {
        let m = BpeModel::train(&["aaab"], 1).unwrap();
        assert_eq!(m.merges(), &[("a@@".to_string(), "a@@".to_string())]);
        let ids = m.encode("aaab");
        assert_eq!(
            ids,
            vec![m.id("aa@@").unwrap(), m.id("a@@").unwrap(), m.id("b").unwrap()]
        );
    }

    #[test]
    fn zero_merges_gives_characters() {
        let m = BpeModel::train(&["ab"], 0).unwrap();
        assert!(m.merges().is_empty());
        assert_eq!(m.encode("ab"), vec![m.id("a@@").unwrap(), m.id("b").unwrap()]);
        assert_eq!(m.vocab_size(), 2 + NUM_SPECIALS);
    }

    #[test]
    fn ties_go_to_smaller_pair() {
        // "xy" and "ab" each occur twice; ("a@@","b") < ("x@@","y").
        let m = BpeModel::train(&["xy ab xy ab"], 1).unwrap();
        assert_eq!(m.merges()[0], ("a@@".to_string(), "b".to_string()));
    }

    #[test]
    fn vocab_size_counts() {
        let corpus = ["low lower lowest", "new newer"];
        let m = BpeModel::train(&corpus, 4).unwrap();
        let m0 = BpeModel::train(&corpus, 0).unwrap();
        assert_eq!(m.vocab_size(), m0.vocab_size() + 4);
    }

    #[test]
    fn decode_handles_unknown_and_empty() {
        let m = BpeModel::train(&["ab ba"], 2).unwrap();
        assert_eq!(m.decode(&[]).unwrap(), "");
        let ids = m.encode("ab zz");
        assert!(ids.contains(&UNK));
        assert!(m.decode(&ids).unwrap().contains("<unk>"));
        assert!(matches!(m.decode(&[999]), Err(Error::UnknownId(999))));
    }

    #[test]
    fn model_file_round_trip() {
        let m = BpeModel::train(&["the cat sat on the mat", "the dog"], 10).unwrap();
        let back = BpeModel::from_text(&m.to_text(), "mem").unwrap();
        assert_eq!(back, m);
        assert!(BpeModel::from_text("#bpe merges=1 vocab=1\n", "mem").is_err());
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(words in proptest::collection::vec("[a-e]{1,6}", 1..8), merges in 0usize..20) {
            let corpus = ["abc bead dace cab", "eee aaa bbb cde"];
            let m = BpeModel::train(&corpus, merges).unwrap();
            let text = words.join(" ");
            let ids = m.encode(&text);
            prop_assert_eq!(m.decode(&ids).unwrap(), text);
            prop_assert_eq!(m.encode(&m.decode(&ids).unwrap()), ids);
        }
    }
}
