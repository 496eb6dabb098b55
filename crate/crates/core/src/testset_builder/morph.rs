//! Pluggable morphology: analysis into (lemma, tags) and inflection back.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Grammatical tags such as `VERB`, `2per`, `sing`, `impr`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Tags(BTreeSet<String>);

impl Tags {
    pub fn parse(s: &str) -> Self {
        Tags(
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn has(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }

    pub fn with(&self, tag: &str) -> Self {
        let mut t = self.clone();
        t.0.insert(tag.to_string());
        t
    }

    pub fn without(&self, tag: &str) -> Self {
        let mut t = self.clone();
        t.0.remove(tag);
        t
    }

    /// Swaps one tag for another when present.
    pub fn replace(&self, from: &str, to: &str) -> Self {
        if self.has(from) {
            self.without(from).with(to)
        } else {
            self.clone()
        }
    }
}

impl fmt::Display for Tags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v: Vec<&str> = self.0.iter().map(String::as_str).collect();
        f.write_str(&v.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Analysis {
    pub lemma: String,
    pub tags: Tags,
}

pub trait MorphologyProvider {
    /// Every analysis of `token`; empty when the token is unknown.
    fn analyze(&self, token: &str) -> Vec<Analysis>;

    /// The surface form of `lemma` carrying exactly `tags`.
    fn inflect(&self, lemma: &str, tags: &Tags) -> Option<String>;

    /// First analysis' lemma, or the token itself when unknown.
    fn lemma(&self, token: &str) -> String {
        self.analyze(token)
            .into_iter()
            .next()
            .map_or_else(|| token.to_string(), |a| a.lemma)
    }
}

/// Table-driven morphology over `surface<TAB>lemma<TAB>tags` lines.
#[derive(Debug, Clone, Default)]
pub struct ToyLexicon {
    entries: Vec<(String, Analysis)>,
    by_surface: HashMap<String, Vec<usize>>,
    by_form: HashMap<(String, Tags), usize>,
}

const BUNDLED: &str = include_str!("../../data/toy_lexicon.tsv");

impl ToyLexicon {
    /// The romanised lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED, "bundled toy lexicon").expect("bundled lexicon parses")
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lex = ToyLexicon::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::parse(origin, i + 1, "expected surface<TAB>lemma<TAB>tags"));
            }
            lex.insert(cols[0], cols[1], Tags::parse(cols[2]));
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn insert(&mut self, surface: &str, lemma: &str, tags: Tags) {
        let idx = self.entries.len();
        self.by_surface
            .entry(surface.to_lowercase())
            .or_default()
            .push(idx);
        self.by_form
            .entry((lemma.to_string(), tags.clone()))
            .or_insert(idx);
        self.entries.push((
            surface.to_string(),
            Analysis {
                lemma: lemma.to_string(),
                tags,
            },
        ));
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Analysis)> {
        self.entries.iter().map(|(s, a)| (s.as_str(), a))
    }
}

impl MorphologyProvider for ToyLexicon {
    fn analyze(&self, token: &str) -> Vec<Analysis> {
        self.by_surface
            .get(&token.to_lowercase())
            .map(|ix| ix.iter().map(|&i| self.entries[i].1.clone()).collect())
            .unwrap_or_default()
    }

    fn inflect(&self, lemma: &str, tags: &Tags) -> Option<String> {
        self.by_form
            .get(&(lemma.to_string(), tags.clone()))
            .map(|&i| self.entries[i].0.clone())
    }
}
