//! Corpus ingestion, fragments, synthetic data and test-set files.

pub mod corpus;
pub mod synth;
pub mod testset;

pub use corpus::{
    corpus_to_tsv, filter_pairs, fragments_to_text, group_and_fragment, group_runs, load_corpus, load_fragments,
    parse_corpus_tsv, parse_fragments, Fragment, FragmentOptions, SubtitlePair, MAX_CONTEXT,
};
pub use testset::{load_testset, parse_testset, save_testset, testset_to_text, ContrastiveInstance, Phenomenon};
pub use synth::{check_register_consistency, gen_synthetic_corpus, oracle_score, SynthConfig, SynthData};
