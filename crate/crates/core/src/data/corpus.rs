//! Subtitle pair ingestion: overlap filtering, temporal grouping and
//! fragment windowing.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One aligned subtitle sentence pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtitlePair {
    pub src: String,
    pub tgt: String,
    pub start: f64,
    pub end: f64,
    /// Relative time overlap of the source and target subtitle frames.
    pub overlap: f64,
}

impl SubtitlePair {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>, start: f64, end: f64, overlap: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&overlap) {
            return Err(Error::InvalidInput(format!("overlap {overlap} outside [0, 1]")));
        }
        if end < start {
            return Err(Error::InvalidInput(format!("end {end} before start {start}")));
        }
        Ok(SubtitlePair {
            src: src.into(),
            tgt: tgt.into(),
            start,
            end,
            overlap,
        })
    }
}

/// A current sentence pair with up to three preceding pairs (oldest first).
#[derive(Debug, Clone, PartialEq)]
pub struct Fragment {
    pub context: Vec<SubtitlePair>,
    pub current: SubtitlePair,
}

pub const MAX_CONTEXT: usize = 3;

impl Fragment {
    pub fn new(context: Vec<SubtitlePair>, current: SubtitlePair) -> Result<Self> {
        if context.len() > MAX_CONTEXT {
            return Err(Error::InvalidInput(format!(
                "{} context sentences, at most {MAX_CONTEXT} allowed",
                context.len()
            )));
        }
        let f = Fragment { context, current };
        if f.pairs().collect::<Vec<_>>().windows(2).any(|w| w[1].start < w[0].start) {
            return Err(Error::InvalidInput("fragment timestamps decrease".into()));
        }
        Ok(f)
    }

    /// All pairs, oldest first, current last.
    pub fn pairs(&self) -> impl Iterator<Item = &SubtitlePair> {
        self.context.iter().chain(std::iter::once(&self.current))
    }

    pub fn len(&self) -> usize {
        self.context.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sources(&self) -> Vec<&str> {
        self.pairs().map(|p| p.src.as_str()).collect()
    }

    pub fn targets(&self) -> Vec<&str> {
        self.pairs().map(|p| p.tgt.as_str()).collect()
    }
}

/// Keeps exactly the pairs whose overlap is at least `min_overlap`.
pub fn filter_pairs(pairs: &[SubtitlePair], min_overlap: f64) -> Vec<SubtitlePair> {
    pairs
        .iter()
        .filter(|p| p.overlap >= min_overlap)
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct FragmentOptions {
    /// Largest allowed gap between consecutive start times, in seconds.
    pub max_gap: f64,
    /// Sentences per full fragment (context + current).
    pub window: usize,
    /// Also emit the run prefixes `(s1, s2)`, ..., `(s1..s_{window-1})`.
    pub include_short_prefixes: bool,
}

impl Default for FragmentOptions {
    fn default() -> Self {
        FragmentOptions {
            max_gap: 7.0,
            window: 4,
            include_short_prefixes: false,
        }
    }
}

/// Splits temporally ordered pairs into runs whose consecutive start times
/// differ by at most `max_gap`.
pub fn group_runs(pairs: &[SubtitlePair], max_gap: f64) -> Result<Vec<Vec<SubtitlePair>>> {
    let mut runs: Vec<Vec<SubtitlePair>> = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if i > 0 && p.start < pairs[i - 1].start {
            return Err(Error::InvalidInput(format!(
                "pair {i} starts at {} before its predecessor at {}",
                p.start,
                pairs[i - 1].start
            )));
        }
        match runs.last_mut() {
            Some(run) if p.start - run.last().unwrap().start <= max_gap => run.push(p.clone()),
            _ => runs.push(vec![p.clone()]),
        }
    }
    Ok(runs)
}

/// Groups pairs into gap-bounded runs and windows each run into fragments.
pub fn group_and_fragment(pairs: &[SubtitlePair], opts: FragmentOptions) -> Result<Vec<Fragment>> {
    if opts.window < 2 || opts.window > MAX_CONTEXT + 1 {
        return Err(Error::InvalidInput(format!(
            "window must be in 2..={}",
            MAX_CONTEXT + 1
        )));
    }
    let mut out = Vec::new();
    for run in group_runs(pairs, opts.max_gap)? {
        let n = run.len();
        if opts.include_short_prefixes {
            for k in 2..opts.window.min(n + 1) {
                out.push(Fragment {
                    context: run[..k - 1].to_vec(),
                    current: run[k - 1].clone(),
                });
            }
        }
        if n >= opts.window {
            for s in 0..=n - opts.window {
                let w = &run[s..s + opts.window];
                out.push(Fragment {
                    context: w[..opts.window - 1].to_vec(),
                    current: w[opts.window - 1].clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Parses `src<TAB>tgt<TAB>start<TAB>end<TAB>overlap` lines.
pub fn parse_corpus_tsv(text: &str, origin: &str) -> Result<Vec<SubtitlePair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::parse(origin, i + 1, format!("expected 5 columns, got {}", cols.len())));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(origin, i + 1, format!("bad {what} {s:?}")))
        };
        let pair = SubtitlePair::new(
            cols[0],
            cols[1],
            num(cols[2], "start")?,
            num(cols[3], "end")?,
            num(cols[4], "overlap")?,
        )
        .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        out.push(pair);
    }
    Ok(out)
}

pub fn corpus_to_tsv(pairs: &[SubtitlePair]) -> String {
    let mut s = String::new();
    for p in pairs {
        let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", p.src, p.tgt, p.start, p.end, p.overlap);
    }
    s
}

pub fn load_corpus(path: &Path) -> Result<Vec<SubtitlePair>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus_tsv(&text, &path.display().to_string())
}

/// Fragments as corpus-TSV blocks separated by blank lines.
pub fn fragments_to_text(fragments: &[Fragment]) -> String {
    fragments
        .iter()
        .map(|f| corpus_to_tsv(&f.pairs().cloned().collect::<Vec<_>>()))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn parse_fragments(text: &str, origin: &str) -> Result<Vec<Fragment>> {
    let mut out = Vec::new();
    let mut block: Vec<SubtitlePair> = Vec::new();
    let mut start_line = 1;
    let flush = |block: &mut Vec<SubtitlePair>, out: &mut Vec<Fragment>, line: usize| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        let current = block.pop().unwrap();
        let f = Fragment::new(std::mem::take(block), current)
            .map_err(|e| Error::parse(origin, line, e.to_string()))?;
        out.push(f);
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut block, &mut out, start_line)?;
            start_line = i + 2;
            continue;
        }
        let mut pairs = parse_corpus_tsv(line, origin).map_err(|e| match e {
            Error::Parse { msg, .. } => Error::parse(origin, i + 1, msg),
            other => other,
        })?;
        block.append(&mut pairs);
    }
    flush(&mut block, &mut out, start_line)?;
    Ok(out)
}

pub fn load_fragments(path: &Path) -> Result<Vec<Fragment>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fragments(&text, &path.display().to_string())
}
