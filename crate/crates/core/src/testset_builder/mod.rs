//! Automatic construction of contrastive test sets over a pluggable
//! morphology provider.

pub mod cohesion;
pub mod deixis;
pub mod ellipsis;
pub mod morph;

pub use cohesion::{
    alternative_translations, build_cohesion_instances, lemma_masses, load_alignments, parse_alignments,
    CohesionOptions, FrequencyList, LexicalTable, SentenceAlignment,
};
pub use deixis::{build_deixis_instances, detect_politeness, switch_politeness, Politeness, DEFAULT_MARKER_BLOCKLIST};
pub use ellipsis::{
    build_vp_ellipsis_instances, load_vp_seeds, parse_vp_seeds, vp_seeds_to_text, VpSeed, DEFAULT_TOP_K, DO_VERB,
};
pub use morph::{Analysis, MorphologyProvider, Tags, ToyLexicon};
