//! Two-pass context-aware machine translation.
//!
//! A context-agnostic Transformer translates each sentence; a context-aware
//! decoder then refines the translation using up to three preceding source
//! sentences and their translations. The crate also provides the contrastive
//! consistency evaluation used to measure whether a model actually uses that
//! context, and builders that derive contrastive test sets from corpora.

pub mod data;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod inference;
pub mod model;
pub mod tensor;
pub mod testset_builder;
pub mod training;
pub mod tokenizer;

pub use error::{Error, Result};
