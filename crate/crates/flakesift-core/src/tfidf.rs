//! TF-IDF vectorization over the mining token streams.
//!
//! Raw term frequency, smoothed idf `ln(N / (1 + df)) + 1`, no length
//! normalization. Downstream mining uses presence counts, so the weighting
//! variant is low-stakes; this is the simplest smoothed form.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use libm::log;

use crate::corpus::{tokenize, Corpus, TokenStream};
use crate::error::{CoreError, CoreResult};

/// Sparse TF-IDF matrix over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfMatrix {
    /// Lexicographically sorted, duplicate-free token list.
    pub vocabulary: Vec<String>,
    /// Per-document sparse rows: (vocabulary index, weight), index-sorted.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Per-token document-frequency counts, aligned with `vocabulary`.
    pub doc_freq: Vec<usize>,
}

impl TfIdfMatrix {
    pub fn vocab_index(&self, token: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn weight(&self, doc: usize, token: &str) -> f64 {
        let Some(j) = self.vocab_index(token) else { return 0.0 };
        self.rows[doc]
            .binary_search_by_key(&j, |&(k, _)| k)
            .map(|pos| self.rows[doc][pos].1)
            .unwrap_or(0.0)
    }
}

/// Tokenize every test and build the TF-IDF matrix.
///
/// `weight(d, t) = tf(d, t) * (ln(|D| / (1 + df(t))) + 1)` with raw
/// in-document counts for tf.
pub fn build_tfidf(corpus: &Corpus) -> CoreResult<TfIdfMatrix> {
    let streams: Vec<TokenStream> = corpus.tests().iter().map(|t| tokenize(&t.source)).collect();
    build_tfidf_from_streams(&streams)
}

/// Same as [`build_tfidf`] but over pre-tokenized streams.
pub fn build_tfidf_from_streams(streams: &[TokenStream]) -> CoreResult<TfIdfMatrix> {
    if streams.is_empty() {
        return Err(CoreError::EmptyCorpus);
    }
    let n_docs = streams.len();

    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for stream in streams {
        for token in stream.distinct() {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let vocabulary: Vec<String> = df.keys().map(|&t| String::from(t)).collect();
    let doc_freq: Vec<usize> = df.values().copied().collect();
    let idf: Vec<f64> = doc_freq
        .iter()
        .map(|&d| log(n_docs as f64 / (1.0 + d as f64)) + 1.0)
        .collect();

    let mut rows = Vec::with_capacity(n_docs);
    for stream in streams {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for token in &stream.tokens {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
        let row: Vec<(usize, f64)> = counts
            .iter()
            .map(|(&tok, &tf)| {
                let j = vocabulary
                    .binary_search_by(|t| t.as_str().cmp(tok))
                    .expect("token came from the same streams");
                (j, tf as f64 * idf[j])
            })
            .collect();
        rows.push(row);
    }
    Ok(TfIdfMatrix { vocabulary, rows, doc_freq })
}
