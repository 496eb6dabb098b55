//! T-V politeness detection, switching and symmetric deixis instances.

use std::collections::BTreeSet;

use crate::data::{ContrastiveInstance, Fragment, Phenomenon};
use crate::error::{Error, Result};

use super::morph::{Analysis, MorphologyProvider, Tags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Politeness {
    /// Informal, second person singular.
    T,
    /// Formal, second person plural.
    V,
}

impl Politeness {
    pub fn flipped(self) -> Self {
        match self {
            Politeness::T => Politeness::V,
            Politeness::V => Politeness::T,
        }
    }

    fn number_tag(self) -> &'static str {
        match self {
            Politeness::T => "sing",
            Politeness::V => "plur",
        }
    }
}

/// Nominal markers that reveal the register on their own; fragments
/// containing any of them are not used for deixis instances.
pub const DEFAULT_MARKER_BLOCKLIST: &[&str] = &[
    "mr", "mr.", "mrs", "mrs.", "ms", "ms.", "sir", "madam", "officer", "honey", "dude", "pal",
    "ser", "ofitser", "chuvak", "druzhok", "milaya",
];

fn indicator(a: &Analysis) -> Option<Politeness> {
    let second_person = a.tags.has("2per") && (a.tags.has("NPRO") || a.tags.has("POSS") || a.tags.has("VERB"));
    let imperative = a.tags.has("VERB") && a.tags.has("impr");
    if !(second_person || imperative) {
        return None;
    }
    if a.tags.has("sing") {
        Some(Politeness::T)
    } else if a.tags.has("plur") {
        Some(Politeness::V)
    } else {
        None
    }
}

fn token_votes(token: &str, morph: &dyn MorphologyProvider) -> BTreeSet<Politeness> {
    morph.analyze(token).iter().filter_map(indicator).collect()
}

/// T or V when the sentence's second-person pronouns, verbs, imperatives
/// and possessives all agree; `None` when there are none or they conflict.
pub fn detect_politeness<S: AsRef<str>>(tokens: &[S], morph: &dyn MorphologyProvider) -> Option<Politeness> {
    let votes: BTreeSet<Politeness> = tokens
        .iter()
        .flat_map(|t| token_votes(t.as_ref(), morph))
        .collect();
    if votes.len() == 1 {
        votes.into_iter().next()
    } else {
        None
    }
}

fn match_case(template: &str, word: String) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        match c.next() {
            Some(f) => f.to_uppercase().chain(c).collect(),
            None => word,
        }
    } else {
        word
    }
}

/// Re-inflects every second-person indicator to the opposite number.
pub fn switch_politeness<S: AsRef<str>>(tokens: &[S], morph: &dyn MorphologyProvider) -> Result<Vec<String>> {
    let from = detect_politeness(tokens, morph).ok_or_else(|| {
        Error::InvalidInput("sentence carries no unambiguous politeness indicator".into())
    })?;
    let to = from.flipped();
    let mut out = Vec::with_capacity(tokens.len());
    let mut missing = Vec::new();
    for t in tokens {
        let t = t.as_ref();
        let analysis = morph
            .analyze(t)
            .into_iter()
            .find(|a| indicator(a) == Some(from));
        match analysis {
            None => out.push(t.to_string()),
            Some(a) => {
                let tags: Tags = a.tags.replace(from.number_tag(), to.number_tag());
                match morph.inflect(&a.lemma, &tags) {
                    Some(w) => out.push(match_case(t, w)),
                    None => missing.push(t.to_string()),
                }
            }
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::InflectionUnavailable(missing))
    }
}

fn tokens(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Builds two mirrored instances (all-T and all-V) per eligible fragment.
///
/// A fragment is eligible when no blocklisted marker occurs on either side,
/// every indicator-bearing target sentence agrees on the register, the final
/// sentence carries an indicator and at least one context sentence does.
pub fn build_deixis_instances(
    fragments: &[Fragment],
    morph: &dyn MorphologyProvider,
    blocklist: &[&str],
) -> Vec<ContrastiveInstance> {
    let blocked: BTreeSet<String> = blocklist.iter().map(|w| w.to_lowercase()).collect();
    let mut out = Vec::new();
    'fragments: for f in fragments {
        let srcs: Vec<String> = f.sources().into_iter().map(String::from).collect();
        let tgts: Vec<String> = f.targets().into_iter().map(String::from).collect();
        let n = tgts.len();
        if n < 2 {
            continue;
        }
        let has_marker = srcs
            .iter()
            .chain(&tgts)
            .flat_map(|s| s.split_whitespace())
            .any(|w| blocked.contains(&w.to_lowercase()));
        if has_marker {
            continue;
        }
        let registers: Vec<Option<Politeness>> =
            tgts.iter().map(|s| detect_politeness(&tokens(s), morph)).collect();
        // A sentence with conflicting indicators disqualifies the fragment.
        for (s, r) in tgts.iter().zip(&registers) {
            if r.is_none() && tokens(s).iter().any(|t| !token_votes(t, morph).is_empty()) {
                continue 'fragments;
            }
        }
        let present: BTreeSet<Politeness> = registers.iter().flatten().copied().collect();
        if present.len() != 1 || registers[n - 1].is_none() {
            continue;
        }
        let Some(nearest) = (0..n - 1).rev().find(|&i| registers[i].is_some()) else {
            continue;
        };
        let distance = n - 1 - nearest;
        let original = *present.iter().next().unwrap();

        let mut flipped = Vec::with_capacity(n);
        for (s, r) in tgts.iter().zip(&registers) {
            if r.is_some() {
                match switch_politeness(&tokens(s), morph) {
                    Ok(t) => flipped.push(t.join(" ")),
                    Err(_) => continue 'fragments,
                }
            } else {
                flipped.push(s.clone());
            }
        }
        let (t_group, v_group) = match original {
            Politeness::T => (tgts.clone(), flipped),
            Politeness::V => (flipped, tgts.clone()),
        };
        for (truth, other) in [(&t_group, &v_group), (&v_group, &t_group)] {
            let mut contrast = truth.clone();
            contrast[n - 1] = other[n - 1].clone();
            out.push(ContrastiveInstance {
                phenomenon: Phenomenon::Deixis,
                src: srcs.clone(),
                true_tgt: truth.clone(),
                contrastive: vec![contrast],
                distance: Some(distance),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubtitlePair;
    use crate::testset_builder::morph::ToyLexicon;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn fragment(pairs: &[(&str, &str)]) -> Fragment {
        let ps: Vec<SubtitlePair> = pairs
            .iter()
            .enumerate()
            .map(|(i, (s, t))| SubtitlePair::new(*s, *t, i as f64, i as f64 + 1.0, 1.0).unwrap())
            .collect();
        let (cur, ctx) = ps.split_last().unwrap();
        Fragment::new(ctx.to_vec(), cur.clone()).unwrap()
    }

    #[test]
    fn detects_each_indicator_class() {
        let lex = ToyLexicon::bundled();
        assert_eq!(detect_politeness(&toks("ty vidish dom"), &lex), Some(Politeness::T));
        assert_eq!(detect_politeness(&toks("vash dom"), &lex), Some(Politeness::V));
        assert_eq!(detect_politeness(&toks("zhdite"), &lex), Some(Politeness::V));
        assert_eq!(detect_politeness(&toks("on vidit dom"), &lex), None);
        assert_eq!(detect_politeness(&toks("ty vidite"), &lex), None);
    }

    #[test]
    fn switching() {
        let lex = ToyLexicon::bundled();
        assert_eq!(switch_politeness(&toks("ty vidish"), &lex).unwrap(), toks("vy vidite"));
        let s = toks("Ty znaesh tvoy dom slushay");
        let back = switch_politeness(&switch_politeness(&s, &lex).unwrap(), &lex).unwrap();
        assert_eq!(back, s);
        assert!(switch_politeness(&toks("on vidit"), &lex).is_err());

        let mut partial = ToyLexicon::bundled();
        partial.insert("tvorish", "tvorit", Tags::parse("VERB,2per,sing,indc"));
        match switch_politeness(&toks("ty tvorish"), &partial) {
            Err(Error::InflectionUnavailable(t)) => assert_eq!(t, vec!["tvorish".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn one_fragment_gives_two_mirrored_instances() {
        let lex = ToyLexicon::bundled();
        let f = fragment(&[
            ("you know", "ty znaesh"),
            ("the house", "dom"),
            ("you see the house", "ty vidish dom"),
        ]);
        let inst = build_deixis_instances(&[f], &lex, DEFAULT_MARKER_BLOCKLIST);
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].true_tgt, vec!["ty znaesh", "dom", "ty vidish dom"]);
        assert_eq!(inst[0].contrastive[0][2], "vy vidite dom");
        assert_eq!(inst[1].true_tgt, vec!["vy znaete", "dom", "vy vidite dom"]);
        assert_eq!(inst[1].contrastive[0][2], "ty vidish dom");
        for i in &inst {
            assert_eq!(i.distance, Some(2));
            i.validate().unwrap();
        }
    }

    #[test]
    fn ineligible_fragments_are_skipped() {
        let lex = ToyLexicon::bundled();
        let marker = fragment(&[("sir you know", "ser vy znaete"), ("you see", "vy vidite")]);
        let mixed = fragment(&[("you know", "ty znaesh"), ("you see", "vy vidite")]);
        let no_ctx = fragment(&[("the house", "dom"), ("you see", "vy vidite")]);
        let single = fragment(&[("you see", "vy vidite")]);
        assert!(build_deixis_instances(&[marker.clone(), mixed, no_ctx, single], &lex, DEFAULT_MARKER_BLOCKLIST).is_empty());
        assert_eq!(build_deixis_instances(&[marker], &lex, &[]).len(), 2);
    }
}
