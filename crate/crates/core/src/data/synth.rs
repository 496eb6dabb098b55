//! Deterministic synthetic bilingual corpus with two context phenomena.
//!
//! Every fragment has a register (informal or formal). Its first source
//! sentence opens with a register marker ("dude", "sir", ...), and every
//! second-person form in the target side of later sentences agrees with it:
//! `ty`/`tvoy`/2sg verbs for informal, `vy`/`vash`/2pl verbs for formal. The
//! English source never shows the distinction after the marker.
//!
//! Named entities have two equally frequent target spellings; a fragment
//! picks one spelling per entity and keeps it throughout, so the spelling of
//! a repeated name is only recoverable from earlier translations.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{Fragment, SubtitlePair};
use super::testset::{ContrastiveInstance, Phenomenon};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Register {
    Informal,
    Formal,
}

impl Register {
    fn idx(self) -> usize {
        match self {
            Register::Informal => 0,
            Register::Formal => 1,
        }
    }

    fn flipped(self) -> Self {
        match self {
            Register::Informal => Register::Formal,
            Register::Formal => Register::Informal,
        }
    }
}

// (source, [informal target, formal target]); index-paired so that marker k
// of one register mirrors marker k of the other.
const MARKERS: [[(&str, &str); 3]; 2] = [
    [("dude", "chuvak"), ("pal", "druzhok"), ("honey", "milaya")],
    [("sir", "ser"), ("officer", "ofitser"), ("madam", "madam")],
];

// source base, source 3sg, [1sg, 2sg, 3sg, 1pl, 2pl]
const VERBS: [(&str, &str, [&str; 5]); 6] = [
    ("see", "sees", ["vizhu", "vidish", "vidit", "vidim", "vidite"]),
    ("know", "knows", ["znayu", "znaesh", "znaet", "znaem", "znaete"]),
    ("want", "wants", ["hochu", "hochesh", "hochet", "hotim", "hotite"]),
    ("love", "loves", ["lyublyu", "lyubish", "lyubit", "lyubim", "lyubite"]),
    ("take", "takes", ["beru", "beresh", "beret", "berem", "berete"]),
    ("hear", "hears", ["slyshu", "slyshish", "slyshit", "slyshim", "slyshite"]),
];

// source, particle, [sing, plur]
const IMPERATIVES: [(&str, &str, [&str; 2]); 2] = [
    ("listen", "to", ["slushay", "slushayte"]),
    ("wait", "for", ["zhdi", "zhdite"]),
];

const NOUNS: [(&str, &str); 12] = [
    ("house", "dom"),
    ("cat", "koshka"),
    ("dog", "sobaka"),
    ("car", "mashina"),
    ("book", "kniga"),
    ("door", "dver"),
    ("key", "klyuch"),
    ("phone", "telefon"),
    ("letter", "pismo"),
    ("money", "dengi"),
    ("ship", "korabl"),
    ("city", "gorod"),
];

const ADJECTIVES: [(&str, &str); 5] = [
    ("big", "bolshoy"),
    ("small", "malenkiy"),
    ("old", "staryy"),
    ("new", "novyy"),
    ("red", "krasnyy"),
];

// source, [[nomn, accs] per spelling]
const NAMES: [(&str, [[&str; 2]; 2]); 8] = [
    ("grace", [["greis", "greis"], ["gres", "gres"]]),
    ("sean", [["shon", "shona"], ["shin", "shina"]]),
    ("jean", [["zhan", "zhana"], ["dzhin", "dzhina"]]),
    ("keith", [["kit", "kita"], ["kis", "kisa"]]),
    ("ralph", [["ralf", "ralfa"], ["rolf", "rolfa"]]),
    ("jack", [["dzhek", "dzheka"], ["zhak", "zhaka"]]),
    ("lucy", [["lyusi", "lyusi"], ["lusi", "lusi"]]),
    ("adam", [["adam", "adama"], ["edem", "edema"]]),
];

pub const NUM_NAMES: usize = NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Subject {
    I,
    We,
    You,
    He,
    She,
    Name(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Possessive {
    My,
    Our,
    Your,
    His,
    Her,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Object {
    Phrase {
        poss: Option<Possessive>,
        adj: Option<usize>,
        noun: usize,
    },
    Name(usize),
}

/// An abstract sentence rendered into both languages under a register and a
/// choice of name spellings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SentSpec {
    Statement { subj: Subject, verb: usize, obj: Object },
    Command { verb: usize, obj: Object },
}

impl SentSpec {
    fn second_person(&self) -> bool {
        match *self {
            SentSpec::Command { .. } => true,
            SentSpec::Statement { subj, obj, .. } => {
                subj == Subject::You
                    || matches!(
                        obj,
                        Object::Phrase {
                            poss: Some(Possessive::Your),
                            ..
                        }
                    )
            }
        }
    }

    fn names(&self) -> BTreeSet<usize> {
        let mut s = BTreeSet::new();
        let obj = match *self {
            SentSpec::Statement { subj, obj, .. } => {
                if let Subject::Name(n) = subj {
                    s.insert(n);
                }
                obj
            }
            SentSpec::Command { obj, .. } => obj,
        };
        if let Object::Name(n) = obj {
            s.insert(n);
        }
        s
    }
}

/// Fragment-level choices shared by all its sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Setting {
    register: Register,
    marker: usize,
    spelling: [usize; NUM_NAMES],
}

fn render_object(obj: Object, reg: Register, spelling: &[usize; NUM_NAMES], src: &mut Vec<String>, tgt: &mut Vec<String>) {
    match obj {
        Object::Name(n) => {
            src.push(NAMES[n].0.into());
            tgt.push(NAMES[n].1[spelling[n]][1].into());
        }
        Object::Phrase { poss, adj, noun } => {
            let (ps, pt) = match poss {
                None => ("the", None),
                Some(Possessive::My) => ("my", Some("moy")),
                Some(Possessive::Our) => ("our", Some("nash")),
                Some(Possessive::Your) => ("your", Some(["tvoy", "vash"][reg.idx()])),
                Some(Possessive::His) => ("his", Some("ego")),
                Some(Possessive::Her) => ("her", Some("ee")),
            };
            src.push(ps.into());
            tgt.extend(pt.map(String::from));
            if let Some(a) = adj {
                src.push(ADJECTIVES[a].0.into());
                tgt.push(ADJECTIVES[a].1.into());
            }
            src.push(NOUNS[noun].0.into());
            tgt.push(NOUNS[noun].1.into());
        }
    }
}

fn render(spec: &SentSpec, set: &Setting, with_marker: bool) -> (String, String) {
    let reg = set.register;
    let mut src: Vec<String> = Vec::new();
    let mut tgt: Vec<String> = Vec::new();
    if with_marker {
        let (ms, mt) = MARKERS[reg.idx()][set.marker];
        src.extend([ms.to_string(), ",".into()]);
        tgt.extend([mt.to_string(), ",".into()]);
    }
    match *spec {
        SentSpec::Command { verb, obj } => {
            let (s, particle, forms) = IMPERATIVES[verb];
            src.extend([s.to_string(), particle.to_string()]);
            tgt.push(forms[reg.idx()].into());
            render_object(obj, reg, &set.spelling, &mut src, &mut tgt);
        }
        SentSpec::Statement { subj, verb, obj } => {
            let (base, third, forms) = VERBS[verb];
            let (s, t, person) = match subj {
                Subject::I => ("i".to_string(), "ya".to_string(), 0),
                Subject::We => ("we".into(), "my".into(), 3),
                Subject::You => ("you".into(), ["ty", "vy"][reg.idx()].to_string(), [1, 4][reg.idx()]),
                Subject::He => ("he".into(), "on".into(), 2),
                Subject::She => ("she".into(), "ona".into(), 2),
                Subject::Name(n) => (NAMES[n].0.into(), NAMES[n].1[set.spelling[n]][0].to_string(), 2),
            };
            src.push(s);
            tgt.push(t);
            src.push(if person == 2 { third } else { base }.into());
            tgt.push(forms[person].into());
            render_object(obj, reg, &set.spelling, &mut src, &mut tgt);
        }
    }
    (src.join(" "), tgt.join(" "))
}

/// Constraints on a sampled sentence.
#[derive(Debug, Clone, Default)]
struct Want {
    second_person: Option<bool>,
    name: Option<usize>,
    forbid: Vec<usize>,
}

struct Sampler<'a> {
    rng: &'a mut ChaCha8Rng,
    cfg: &'a SynthConfig,
}

impl Sampler<'_> {
    fn sample(&mut self, cast: &[usize], want: &Want) -> SentSpec {
        loop {
            let spec = self.propose(cast, want);
            let sp_ok = want.second_person.is_none_or(|w| spec.second_person() == w);
            let names = spec.names();
            let name_ok = want.name.is_none_or(|n| names.contains(&n));
            let forbid_ok = want.forbid.iter().all(|n| !names.contains(n));
            if sp_ok && name_ok && forbid_ok {
                return spec;
            }
        }
    }

    fn pick_name(&mut self, cast: &[usize], want: &Want) -> usize {
        match want.name {
            Some(n) if self.rng.gen_bool(0.5) => n,
            _ => *cast.choose(self.rng).unwrap(),
        }
    }

    fn propose(&mut self, cast: &[usize], want: &Want) -> SentSpec {
        let name_rate = if want.name.is_some() { 0.6 } else { self.cfg.name_rate };
        let you_rate = match want.second_person {
            Some(true) => 0.7,
            Some(false) => 0.0,
            None => self.cfg.second_person_rate,
        };
        let rng_obj = |s: &mut Self, allow_your: bool| -> Object {
            if s.rng.gen_bool(name_rate) {
                return Object::Name(s.pick_name(cast, want));
            }
            let poss = match s.rng.gen_range(0..6) {
                0 => None,
                1 => Some(Possessive::My),
                2 => Some(Possessive::Our),
                3 if allow_your => Some(Possessive::Your),
                3 => None,
                4 => Some(Possessive::His),
                _ => Some(Possessive::Her),
            };
            let adj = s.rng.gen_bool(0.4).then(|| s.rng.gen_range(0..ADJECTIVES.len()));
            Object::Phrase {
                poss,
                adj,
                noun: s.rng.gen_range(0..NOUNS.len()),
            }
        };
        if you_rate > 0.0 && self.rng.gen_bool(0.15) {
            let verb = self.rng.gen_range(0..IMPERATIVES.len());
            let obj = rng_obj(self, true);
            return SentSpec::Command { verb, obj };
        }
        let subj = if self.rng.gen_bool(you_rate) {
            Subject::You
        } else if self.rng.gen_bool(name_rate) {
            Subject::Name(self.pick_name(cast, want))
        } else {
            [Subject::I, Subject::We, Subject::He, Subject::She][self.rng.gen_range(0..4)]
        };
        let verb = self.rng.gen_range(0..VERBS.len());
        let obj = rng_obj(self, you_rate > 0.0);
        SentSpec::Statement { subj, verb, obj }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_fragments: usize,
    pub n_dev_fragments: usize,
    /// Contrastive pairs per distance bucket in each of the dev and test sets.
    pub pairs_per_distance: usize,
    /// Low-overlap junk pairs interleaved with the fragments.
    pub n_noise_pairs: usize,
    pub second_person_rate: f64,
    pub name_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            n_fragments: 2000,
            n_dev_fragments: 100,
            pairs_per_distance: 50,
            n_noise_pairs: 50,
            second_person_rate: 0.4,
            name_rate: 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    /// Timed training pairs, four per fragment plus noise pairs.
    pub train: Vec<SubtitlePair>,
    pub dev: Vec<Fragment>,
    pub deixis_dev: Vec<ContrastiveInstance>,
    pub deixis_test: Vec<ContrastiveInstance>,
    pub cohesion_dev: Vec<ContrastiveInstance>,
    pub cohesion_test: Vec<ContrastiveInstance>,
}

pub const FRAGMENT_SPACING: f64 = 30.0;
pub const SENTENCE_SPACING: f64 = 2.0;

fn random_setting(rng: &mut ChaCha8Rng) -> Setting {
    let mut spelling = [0; NUM_NAMES];
    for s in &mut spelling {
        *s = rng.gen_range(0..2);
    }
    Setting {
        register: if rng.gen_bool(0.5) { Register::Informal } else { Register::Formal },
        marker: rng.gen_range(0..MARKERS[0].len()),
        spelling,
    }
}

fn random_cast(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut all: Vec<usize> = (0..NUM_NAMES).collect();
    all.shuffle(rng);
    all.truncate(2);
    all
}

fn render_all(specs: &[SentSpec], set: &Setting) -> (Vec<String>, Vec<String>) {
    specs
        .iter()
        .enumerate()
        .map(|(i, s)| render(s, set, i == 0))
        .unzip()
}

fn timed(srcs: &[String], tgts: &[String], t0: f64, rng: &mut ChaCha8Rng) -> Vec<SubtitlePair> {
    srcs.iter()
        .zip(tgts)
        .enumerate()
        .map(|(i, (s, t))| {
            let start = t0 + SENTENCE_SPACING * i as f64;
            let overlap = rng.gen_range(0.9..=1.0);
            SubtitlePair::new(s.clone(), t.clone(), start, start + 1.5, overlap).expect("valid pair")
        })
        .collect()
}

fn deixis_pair(sampler: &mut Sampler, distance: usize) -> [ContrastiveInstance; 2] {
    let set = random_setting(sampler.rng);
    let cast = random_cast(sampler.rng);
    let relevant = 3 - distance;
    let specs: Vec<SentSpec> = (0..4)
        .map(|i| {
            let second_person = if i == 3 || (i == relevant && i > 0) {
                Some(true)
            } else if i > relevant {
                Some(false)
            } else {
                None
            };
            sampler.sample(
                &cast,
                &Want {
                    second_person,
                    ..Want::default()
                },
            )
        })
        .collect();
    let mine = render_all(&specs, &set);
    let other_set = Setting {
        register: set.register.flipped(),
        ..set
    };
    let other = render_all(&specs, &other_set);
    let make = |a: &(Vec<String>, Vec<String>), b: &(Vec<String>, Vec<String>)| {
        let mut contrast = a.1.clone();
        contrast[3] = b.1[3].clone();
        ContrastiveInstance {
            phenomenon: Phenomenon::Deixis,
            src: a.0.clone(),
            true_tgt: a.1.clone(),
            contrastive: vec![contrast],
            distance: Some(distance),
        }
    };
    [make(&mine, &other), make(&other, &mine)]
}

fn cohesion_pair(sampler: &mut Sampler, distance: usize) -> [ContrastiveInstance; 2] {
    let set = random_setting(sampler.rng);
    let cast = random_cast(sampler.rng);
    let entity = cast[0];
    let relevant = 3 - distance;
    let specs: Vec<SentSpec> = (0..4)
        .map(|i| {
            let want = if i == 3 || i == relevant {
                Want {
                    name: Some(entity),
                    ..Want::default()
                }
            } else if i > relevant {
                Want {
                    forbid: vec![entity],
                    ..Want::default()
                }
            } else {
                Want::default()
            };
            sampler.sample(&cast, &want)
        })
        .collect();
    let with_spelling = |s: usize| {
        let mut x = set;
        x.spelling[entity] = s;
        x
    };
    let a = with_spelling(0);
    let b = with_spelling(1);
    let ra = render_all(&specs, &a);
    let rb = render_all(&specs, &b);
    let make = |truth: &(Vec<String>, Vec<String>), other: &(Vec<String>, Vec<String>)| {
        let mut contrast = truth.1.clone();
        contrast[3] = other.1[3].clone();
        ContrastiveInstance {
            phenomenon: Phenomenon::LexCohesion,
            src: truth.0.clone(),
            true_tgt: truth.1.clone(),
            contrastive: vec![contrast],
            distance: Some(distance),
        }
    };
    [make(&ra, &rb), make(&rb, &ra)]
}

fn random_fragment(sampler: &mut Sampler) -> (Vec<String>, Vec<String>) {
    let set = random_setting(sampler.rng);
    let cast = random_cast(sampler.rng);
    let specs: Vec<SentSpec> = (0..4).map(|_| sampler.sample(&cast, &Want::default())).collect();
    render_all(&specs, &set)
}

fn noise_pair(rng: &mut ChaCha8Rng, t0: f64) -> SubtitlePair {
    let src = NOUNS[rng.gen_range(0..NOUNS.len())].0;
    let tgt = ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())].1;
    let overlap = rng.gen_range(0.2..0.85);
    SubtitlePair::new(src, tgt, t0, t0 + 1.0, overlap).expect("valid pair")
}

fn balanced_set(
    sampler: &mut Sampler,
    per_distance: usize,
    make: fn(&mut Sampler, usize) -> [ContrastiveInstance; 2],
) -> Vec<ContrastiveInstance> {
    let mut out = Vec::new();
    for d in 1..=3 {
        for _ in 0..per_distance {
            out.extend(make(sampler, d));
        }
    }
    out
}

/// Generates the training corpus, dev fragments and the distance-balanced
/// deixis and cohesion sets. Identical configs give identical output.
pub fn gen_synthetic_corpus(cfg: &SynthConfig) -> SynthData {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sampler = Sampler { rng: &mut rng, cfg };

    let mut train = Vec::new();
    let noise_every = if cfg.n_noise_pairs == 0 {
        usize::MAX
    } else {
        cfg.n_fragments.div_ceil(cfg.n_noise_pairs).max(1)
    };
    let mut noise_left = cfg.n_noise_pairs;
    for k in 0..cfg.n_fragments {
        let t0 = k as f64 * FRAGMENT_SPACING;
        let (s, t) = random_fragment(&mut sampler);
        train.extend(timed(&s, &t, t0, sampler.rng));
        if noise_left > 0 && k % noise_every == 0 {
            train.push(noise_pair(sampler.rng, t0 + 15.0));
            noise_left -= 1;
        }
    }

    let mut dev = Vec::new();
    for k in 0..cfg.n_dev_fragments {
        let (s, t) = random_fragment(&mut sampler);
        let mut pairs = timed(&s, &t, k as f64 * FRAGMENT_SPACING, sampler.rng);
        let current = pairs.pop().unwrap();
        dev.push(Fragment::new(pairs, current).expect("valid fragment"));
    }

    let deixis_dev = balanced_set(&mut sampler, cfg.pairs_per_distance, deixis_pair);
    let cohesion_dev = balanced_set(&mut sampler, cfg.pairs_per_distance, cohesion_pair);
    let deixis_test = balanced_set(&mut sampler, cfg.pairs_per_distance, deixis_pair);
    let cohesion_test = balanced_set(&mut sampler, cfg.pairs_per_distance, cohesion_pair);
    SynthData {
        train,
        dev,
        deixis_dev,
        deixis_test,
        cohesion_dev,
        cohesion_test,
    }
}

fn marker_register(first_src: &str) -> Option<Register> {
    let first = first_src.split_whitespace().next()?;
    [Register::Informal, Register::Formal]
        .into_iter()
        .find(|r| MARKERS[r.idx()].iter().any(|(s, _)| *s == first))
}

/// Register signalled by a target token, if it is a second-person form.
fn token_register(tok: &str) -> Option<Register> {
    let forms = |r: Register| -> Vec<&'static str> {
        let i = r.idx();
        let mut v = vec![["ty", "vy"][i], ["tvoy", "vash"][i]];
        v.extend(VERBS.iter().map(|(_, _, f)| f[[1, 4][i]]));
        v.extend(IMPERATIVES.iter().map(|(_, _, f)| f[i]));
        v.extend(MARKERS[i].iter().map(|(_, t)| *t));
        v
    };
    [Register::Informal, Register::Formal]
        .into_iter()
        .find(|&r| forms(r).contains(&tok))
}

/// Generator-level oracle: the first source sentence carries a marker, no
/// other source sentence does, and every register-bearing target token
/// agrees with the marker.
pub fn check_register_consistency(srcs: &[&str], tgts: &[&str]) -> Result<(), String> {
    let reg = srcs
        .first()
        .and_then(|s| marker_register(s))
        .ok_or("first source sentence has no register marker")?;
    for (i, s) in srcs.iter().enumerate().skip(1) {
        if marker_register(s).is_some() {
            return Err(format!("sentence {} repeats a marker", i + 1));
        }
    }
    for (i, t) in tgts.iter().enumerate() {
        for tok in t.split_whitespace() {
            if token_register(tok).is_some_and(|r| r != reg) {
                return Err(format!("sentence {} token {tok:?} disagrees with the marker", i + 1));
            }
        }
    }
    Ok(())
}

fn name_spellings(tok: &str) -> Option<(usize, usize)> {
    NAMES.iter().enumerate().find_map(|(n, (_, sp))| {
        sp.iter().position(|forms| forms.contains(&tok)).map(|s| (n, s))
    })
}

/// Oracle score reading the context: the number of register-bearing tokens
/// and name spellings in the final sentence that agree with the marker and
/// with earlier spellings, minus those that disagree.
pub fn oracle_score(inst: &ContrastiveInstance, group: usize) -> f64 {
    let tgt = inst.group(group);
    let n = tgt.len();
    let reg = marker_register(&inst.src[0]);
    let mut seen = [None; NUM_NAMES];
    for t in &tgt[..n - 1] {
        for tok in t.split_whitespace() {
            if let Some((e, s)) = name_spellings(tok) {
                seen[e] = Some(s);
            }
        }
    }
    let mut score = 0.0;
    for tok in tgt[n - 1].split_whitespace() {
        if let (Some(r), Some(want)) = (token_register(tok), reg) {
            score += if r == want { 1.0 } else { -1.0 };
        }
        if let Some((e, s)) = name_spellings(tok) {
            if let Some(prev) = seen[e] {
                score += if prev == s { 1.0 } else { -1.0 };
            }
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{corpus_to_tsv, filter_pairs, group_and_fragment, testset_to_text, FragmentOptions};

    fn small() -> SynthConfig {
        SynthConfig {
            seed: 7,
            n_fragments: 60,
            n_dev_fragments: 10,
            pairs_per_distance: 10,
            n_noise_pairs: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_synthetic_corpus(&small());
        let b = gen_synthetic_corpus(&small());
        assert_eq!(corpus_to_tsv(&a.train), corpus_to_tsv(&b.train));
        assert_eq!(testset_to_text(&a.deixis_test), testset_to_text(&b.deixis_test));
        let c = gen_synthetic_corpus(&SynthConfig { seed: 8, ..small() });
        assert_ne!(corpus_to_tsv(&a.train), corpus_to_tsv(&c.train));
    }

    #[test]
    fn every_fragment_is_register_consistent() {
        let data = gen_synthetic_corpus(&small());
        let kept = filter_pairs(&data.train, 0.9);
        assert_eq!(kept.len(), 4 * 60);
        let opts = FragmentOptions {
            include_short_prefixes: true,
            ..FragmentOptions::default()
        };
        let frags = group_and_fragment(&kept, opts).unwrap();
        assert_eq!(frags.len(), 3 * 60);
        for f in frags.iter().chain(&data.dev) {
            check_register_consistency(&f.sources(), &f.targets()).unwrap();
        }
        let set = data.deixis_test.iter().chain(&data.cohesion_test);
        for inst in set {
            let srcs: Vec<&str> = inst.src.iter().map(String::as_str).collect();
            let tgts: Vec<&str> = inst.true_tgt.iter().map(String::as_str).collect();
            check_register_consistency(&srcs, &tgts).unwrap();
        }
    }

    #[test]
    fn oracle_check_rejects_inconsistency() {
        assert!(check_register_consistency(&["sir , you see"], &["ser , vy vidite"]).is_ok());
        assert!(check_register_consistency(&["sir , you see", "you see"], &["ser , vy vidite", "ty vidish"]).is_err());
        assert!(check_register_consistency(&["you see"], &["vy vidite"]).is_err());
    }

    #[test]
    fn test_sets_are_valid_balanced_and_solved_by_the_oracle() {
        let data = gen_synthetic_corpus(&small());
        for set in [&data.deixis_test, &data.deixis_dev, &data.cohesion_test, &data.cohesion_dev] {
            assert_eq!(set.len(), 2 * 3 * 10);
            for d in 1..=3 {
                assert_eq!(set.iter().filter(|i| i.distance == Some(d)).count(), 20);
            }
            for inst in set.iter() {
                inst.validate().unwrap();
                assert!(oracle_score(inst, 0) > oracle_score(inst, 1), "{inst:?}");
            }
            for pair in set.chunks(2) {
                assert_eq!(pair[0].src.last(), pair[1].src.last());
                assert_eq!(pair[0].true_tgt.last(), pair[1].contrastive[0].last());
                assert_eq!(pair[1].true_tgt.last(), pair[0].contrastive[0].last());
            }
        }
    }

    #[test]
    fn deixis_distance_is_the_nearest_second_person_sentence() {
        let data = gen_synthetic_corpus(&small());
        for inst in &data.deixis_test {
            let d = inst.distance.unwrap();
            let relevant = 3 - d;
            for (i, t) in inst.true_tgt.iter().enumerate().take(3).skip(1) {
                let has = t.split_whitespace().any(|w| token_register(w).is_some());
                if i == relevant {
                    assert!(has);
                } else if i > relevant {
                    assert!(!has);
                }
            }
        }
    }
}
