//! The 16-dimensional symbolic feature channel.
//!
//! Positions 1-9 are log-compressed hit counts for the nine fixed indicator
//! groups; positions 10-15 count matches against each category's mined
//! top-K tokens in enum order; position 16 counts distinct mined tokens
//! matched overall.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use libm::log1p;
use serde::{Deserialize, Serialize};

use crate::category::FlakinessCategory;
use crate::corpus::{tokenize, Corpus, TestCase, TokenStream};
use crate::dtm::SymbolicVocabulary;

pub const SYMBOLIC_DIM: usize = 16;
pub const GROUP_COUNT: usize = 9;

/// One named indicator group: a set of lowercase trigger tokens. A trigger
/// ending in `*` matches by prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub triggers: Vec<String>,
}

/// The nine indicator groups, in fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroupSpec {
    pub groups: Vec<FeatureGroup>,
}

impl FeatureGroupSpec {
    /// The default nine-group taxonomy.
    pub fn standard() -> Self {
        let mk = |name: &str, triggers: &[&str]| FeatureGroup {
            name: String::from(name),
            triggers: triggers.iter().map(|&t| String::from(t)).collect(),
        };
        FeatureGroupSpec {
            groups: alloc::vec![
                mk("sleep_await", &["sleep", "thread.sleep", "await", "timeunit.*"]),
                mk("has_network", &["socket", "http", "url", "connect", "netty"]),
                mk(
                    "has_future_async",
                    &["future", "completablefuture", "promise", "countdownlatch"],
                ),
                mk("threading", &["thread", "executorservice", "runnable"]),
                mk("has_atomic", &["atomicinteger", "atomicboolean", "atomic*"]),
                mk(
                    "has_sync_lock",
                    &["countdownlatch", "cyclicbarrier", "semaphore", "lock", "synchronized"],
                ),
                mk(
                    "has_time_ops",
                    &["currenttimemillis", "nanotime", "stopwatch", "clock", "duration"],
                ),
                mk("has_json_unordered", &["json", "map", "set", "iterator"]),
                mk(
                    "has_persistence",
                    &["save", "delete", "repository", "database", "filesystem"],
                ),
            ],
        }
    }

    fn trigger_matches(trigger: &str, token: &str) -> bool {
        match trigger.strip_suffix('*') {
            Some(prefix) => token.starts_with(prefix),
            None => token == trigger,
        }
    }

    /// Number of stream tokens hitting any trigger of group `g`.
    pub fn group_hits(&self, g: usize, stream: &TokenStream) -> usize {
        let group = &self.groups[g];
        stream
            .tokens
            .iter()
            .filter(|tok| group.triggers.iter().any(|tr| Self::trigger_matches(tr, tok)))
            .count()
    }
}

/// The per-test symbolic signal fed to the projection head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicFeatureVector(pub [f64; SYMBOLIC_DIM]);

impl SymbolicFeatureVector {
    pub fn zeros() -> Self {
        SymbolicFeatureVector([0.0; SYMBOLIC_DIM])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Extract the 16-dimensional symbolic vector for one test.
///
/// Counts are taken over the mining token stream, so comments and string
/// literals never contribute. All entries are `log(1 + count)`.
pub fn extract(
    test: &TestCase,
    vocab: &SymbolicVocabulary,
    spec: &FeatureGroupSpec,
) -> SymbolicFeatureVector {
    extract_from_stream(&tokenize(&test.source), vocab, spec)
}

/// [`extract`] over a pre-tokenized stream.
pub fn extract_from_stream(
    stream: &TokenStream,
    vocab: &SymbolicVocabulary,
    spec: &FeatureGroupSpec,
) -> SymbolicFeatureVector {
    let mut v = [0.0; SYMBOLIC_DIM];
    for g in 0..GROUP_COUNT {
        v[g] = log1p(spec.group_hits(g, stream) as f64);
    }
    let mut matched_distinct: BTreeSet<&str> = BTreeSet::new();
    for (ci, c) in FlakinessCategory::ALL.into_iter().enumerate() {
        let entries = vocab.entries(c);
        let mut hits = 0usize;
        for tok in &stream.tokens {
            if let Some(entry) = entries.iter().find(|e| e.token == *tok) {
                hits += 1;
                matched_distinct.insert(entry.token.as_str());
            }
        }
        v[GROUP_COUNT + ci] = log1p(hits as f64);
    }
    v[SYMBOLIC_DIM - 1] = log1p(matched_distinct.len() as f64);
    SymbolicFeatureVector(v)
}

/// Row-per-test feature matrix; row i corresponds to `corpus.tests()[i]`.
pub fn batch_extract(
    corpus: &Corpus,
    vocab: &SymbolicVocabulary,
    spec: &FeatureGroupSpec,
) -> Vec<SymbolicFeatureVector> {
    corpus.tests().iter().map(|t| extract(t, vocab, spec)).collect()
}
