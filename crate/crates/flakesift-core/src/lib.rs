//! Core algorithms for neuro-symbolic flaky-test classification.
//!
//! Everything in this crate is pure and deterministic: Java-test lexing and
//! TF-IDF, chi-square discriminative token mining, the 16-dimensional
//! symbolic feature channel, a small trainable dual-channel classifier with
//! hand-written backpropagation, ENS/focal imbalance-aware losses, stratified
//! project-disjoint splitting, semantics-preserving adversarial augmentation,
//! and evaluation metrics. File formats, the CLI, and the synthetic corpus
//! generator live in the companion `flakesift` crate.

#![no_std]

extern crate alloc;

pub mod augment;
pub mod category;
pub mod corpus;
pub mod dtm;
pub mod error;
pub mod eval;
pub mod lexer;
pub mod loss;
pub mod model;
pub mod rng;
pub mod splitter;
pub mod stats;
pub mod symbolic;
pub mod tfidf;
pub mod trainer;

pub use category::FlakinessCategory;
pub use corpus::{Corpus, TestCase, TokenStream};
pub use dtm::{ChiSquareScore, MiningParams, SymbolicVocabulary};
pub use error::CoreError;
pub use model::{Logits, ModelConfig, ModelState};
pub use splitter::SplitPlan;
pub use symbolic::{FeatureGroupSpec, SymbolicFeatureVector};
