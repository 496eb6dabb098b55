//! Contrastive test instances and their line-oriented file format.
//!
//! ```text
//! # phenomenon=deixis distance=2
//! S1 source sentence one
//! S2 source sentence two
//! T1 reference translation one
//! T2 reference translation two
//! C1.1 first contrastive group, sentence one
//! C1.2 first contrastive group, sentence two
//! ```
//!
//! Blocks are separated by blank lines. `distance=na` marks instances
//! without a latest-relevant-context bucket.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phenomenon {
    Deixis,
    LexCohesion,
    EllipsisInfl,
    EllipsisVp,
}

impl Phenomenon {
    pub const ALL: [Phenomenon; 4] = [
        Phenomenon::Deixis,
        Phenomenon::LexCohesion,
        Phenomenon::EllipsisInfl,
        Phenomenon::EllipsisVp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Phenomenon::Deixis => "deixis",
            Phenomenon::LexCohesion => "lex_cohesion",
            Phenomenon::EllipsisInfl => "ellipsis_infl",
            Phenomenon::EllipsisVp => "ellipsis_vp",
        }
    }
}

impl fmt::Display for Phenomenon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phenomenon {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Phenomenon::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown phenomenon {s:?}")))
    }
}

/// Source sentences, one true translation group and at least one
/// contrastive group. The last sentence is the one being tested.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContrastiveInstance {
    pub phenomenon: Phenomenon,
    pub src: Vec<String>,
    pub true_tgt: Vec<String>,
    pub contrastive: Vec<Vec<String>>,
    /// Distance (1..=3) to the latest context sentence that disambiguates
    /// the final one.
    pub distance: Option<usize>,
}

impl ContrastiveInstance {
    /// Checks the structural invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.src.len();
        if !(1..=4).contains(&n) {
            return Err(format!("{n} source sentences (expected 1-4)"));
        }
        if self.true_tgt.len() != n {
            return Err(format!(
                "true group has {} sentences for {n} sources",
                self.true_tgt.len()
            ));
        }
        if self.contrastive.is_empty() {
            return Err("no contrastive group".into());
        }
        if let Some(d) = self.distance {
            if !(1..=3).contains(&d) || d >= n {
                return Err(format!("distance {d} impossible with {n} sentences"));
            }
        }
        for (k, group) in self.contrastive.iter().enumerate() {
            if group.len() != n {
                return Err(format!(
                    "contrastive group {} has {} sentences, expected {n}",
                    k + 1,
                    group.len()
                ));
            }
            if group[..n - 1] != self.true_tgt[..n - 1] {
                return Err(format!("contrastive group {} changes context sentences", k + 1));
            }
            if group[n - 1] == self.true_tgt[n - 1] {
                return Err(format!("contrastive group {} equals the true group", k + 1));
            }
        }
        Ok(())
    }

    /// Group 0 is the true translation, groups `1..` the contrastive ones.
    pub fn group(&self, index: usize) -> &[String] {
        if index == 0 {
            &self.true_tgt
        } else {
            &self.contrastive[index - 1]
        }
    }

    pub fn num_groups(&self) -> usize {
        1 + self.contrastive.len()
    }
}

pub fn testset_to_text(instances: &[ContrastiveInstance]) -> String {
    let mut s = String::new();
    for (i, inst) in instances.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let d = inst
            .distance
            .map_or_else(|| "na".to_string(), |d| d.to_string());
        let _ = writeln!(s, "# phenomenon={} distance={d}", inst.phenomenon);
        for (j, t) in inst.src.iter().enumerate() {
            let _ = writeln!(s, "S{} {t}", j + 1);
        }
        for (j, t) in inst.true_tgt.iter().enumerate() {
            let _ = writeln!(s, "T{} {t}", j + 1);
        }
        for (k, g) in inst.contrastive.iter().enumerate() {
            for (j, t) in g.iter().enumerate() {
                let _ = writeln!(s, "C{}.{} {t}", k + 1, j + 1);
            }
        }
    }
    s
}

#[derive(Default)]
struct Block {
    first_line: usize,
    header: Option<(Phenomenon, Option<usize>)>,
    src: Vec<String>,
    tgt: Vec<String>,
    contrastive: Vec<Vec<String>>,
}

fn expect_index(got: usize, want: usize, origin: &str, line: usize) -> Result<()> {
    if got != want {
        return Err(Error::parse(origin, line, format!("expected index {want}, got {got}")));
    }
    Ok(())
}

pub fn parse_testset(text: &str, origin: &str) -> Result<Vec<ContrastiveInstance>> {
    let mut out = Vec::new();
    let mut block: Option<Block> = None;

    let finish = |b: Block, out: &mut Vec<ContrastiveInstance>| -> Result<()> {
        let (phenomenon, distance) = b
            .header
            .ok_or_else(|| Error::parse(origin, b.first_line, "block without header"))?;
        let inst = ContrastiveInstance {
            phenomenon,
            src: b.src,
            true_tgt: b.tgt,
            contrastive: b.contrastive,
            distance,
        };
        inst.validate().map_err(|msg| Error::InvalidInstance {
            index: out.len(),
            msg: format!("{msg} (block at {origin}:{})", b.first_line),
        })?;
        out.push(inst);
        Ok(())
    };

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            if let Some(b) = block.take() {
                finish(b, &mut out)?;
            }
            continue;
        }
        let b = block.get_or_insert_with(|| Block {
            first_line: ln,
            ..Default::default()
        });
        if let Some(rest) = line.strip_prefix('#') {
            if b.header.is_some() || !b.src.is_empty() {
                return Err(Error::parse(origin, ln, "header must start a block"));
            }
            let mut phen = None;
            let mut dist = None;
            for field in rest.split_whitespace() {
                match field.split_once('=') {
                    Some(("phenomenon", v)) => {
                        phen = Some(v.parse().map_err(|e: Error| Error::parse(origin, ln, e.to_string()))?)
                    }
                    Some(("distance", "na")) => dist = Some(None),
                    Some(("distance", v)) => {
                        let d = v
                            .parse::<usize>()
                            .map_err(|_| Error::parse(origin, ln, format!("bad distance {v:?}")))?;
                        dist = Some(Some(d));
                    }
                    _ => return Err(Error::parse(origin, ln, format!("unknown header field {field:?}"))),
                }
            }
            let (Some(p), Some(d)) = (phen, dist) else {
                return Err(Error::parse(origin, ln, "header needs phenomenon= and distance="));
            };
            b.header = Some((p, d));
            continue;
        }
        let (tag, body) = line.split_once(' ').unwrap_or((line, ""));
        let bad = || Error::parse(origin, ln, format!("unrecognised line tag {tag:?}"));
        let index = |s: &str| s.parse::<usize>().map_err(|_| bad());
        if let Some(n) = tag.strip_prefix('S') {
            expect_index(index(n)?, b.src.len() + 1, origin, ln)?;
            b.src.push(body.to_string());
        } else if let Some(n) = tag.strip_prefix('T') {
            expect_index(index(n)?, b.tgt.len() + 1, origin, ln)?;
            b.tgt.push(body.to_string());
        } else if let Some(rest) = tag.strip_prefix('C') {
            let (k, j) = rest.split_once('.').ok_or_else(bad)?;
            let (k, j) = (index(k)?, index(j)?);
            if j == 1 {
                expect_index(k, b.contrastive.len() + 1, origin, ln)?;
                b.contrastive.push(Vec::new());
            } else {
                expect_index(k, b.contrastive.len(), origin, ln)?;
            }
            let group = b.contrastive.last_mut().ok_or_else(bad)?;
            expect_index(j, group.len() + 1, origin, ln)?;
            group.push(body.to_string());
        } else {
            return Err(bad());
        }
    }
    if let Some(b) = block.take() {
        finish(b, &mut out)?;
    }
    Ok(out)
}

pub fn load_testset(path: &Path) -> Result<Vec<ContrastiveInstance>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_testset(&text, &path.display().to_string())
}

pub fn save_testset(path: &Path, instances: &[ContrastiveInstance]) -> Result<()> {
    std::fs::write(path, testset_to_text(instances)).map_err(|e| Error::io(path, e))
}
