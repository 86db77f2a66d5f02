//! Data model: test cases, corpora, and the mining tokenizer.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::category::FlakinessCategory;
use crate::error::{CoreError, CoreResult};
use crate::lexer::{self, CodeTokenKind};

/// One Java test method with provenance and label — the atomic unit of the
/// pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub project: String,
    /// Java test-method source text.
    #[serde(rename = "code")]
    pub source: String,
    pub label: FlakinessCategory,
}

/// An ordered collection of test cases with derived indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    tests: Vec<TestCase>,
    project_index: BTreeMap<String, BTreeSet<String>>,
    category_counts: BTreeMap<FlakinessCategory, usize>,
}

impl Corpus {
    /// Build a corpus from tests, preserving input order.
    ///
    /// Rejects duplicate ids and empty `source`/`project` fields.
    pub fn new(tests: Vec<TestCase>) -> CoreResult<Self> {
        let mut seen = BTreeSet::new();
        let mut project_index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut category_counts: BTreeMap<FlakinessCategory, usize> = BTreeMap::new();
        for t in &tests {
            if !seen.insert(t.id.clone()) {
                return Err(CoreError::DuplicateId(t.id.clone()));
            }
            if t.source.is_empty() {
                return Err(CoreError::InvalidArgument(alloc::format!(
                    "test {:?} has empty source",
                    t.id
                )));
            }
            if t.project.is_empty() {
                return Err(CoreError::InvalidArgument(alloc::format!(
                    "test {:?} has empty project",
                    t.id
                )));
            }
            project_index.entry(t.project.clone()).or_default().insert(t.id.clone());
            *category_counts.entry(t.label).or_insert(0) += 1;
        }
        Ok(Corpus { tests, project_index, category_counts })
    }

    pub fn tests(&self) -> &[TestCase] {
        &self.tests
    }

    pub fn len(&self) -> usize {
        self.tests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tests.is_empty()
    }

    /// Project → set of test ids.
    pub fn project_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.project_index
    }

    pub fn projects(&self) -> impl Iterator<Item = &str> {
        self.project_index.keys().map(|s| s.as_str())
    }

    /// Number of tests labeled `c`.
    pub fn category_count(&self, c: FlakinessCategory) -> usize {
        self.category_counts.get(&c).copied().unwrap_or(0)
    }

    pub fn category_counts(&self) -> &BTreeMap<FlakinessCategory, usize> {
        &self.category_counts
    }

    /// Sub-corpus containing the tests whose id is in `ids`, in corpus order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> CoreResult<Corpus> {
        Corpus::new(self.tests.iter().filter(|t| ids.contains(&t.id)).cloned().collect())
    }
}

/// Lowercase token sequence produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    /// Distinct tokens, for presence-based statistics.
    pub fn distinct(&self) -> BTreeSet<&str> {
        self.tokens.iter().map(|s| s.as_str()).collect()
    }
}

/// Tokenize Java source into lowercase identifiers and two-segment dotted
/// chains (`Thread.sleep` → `thread.sleep`, `thread`, `sleep`).
///
/// Comments, string literals, reserved words, and the `true`/`false`/`null`
/// literals are excluded. Longer member chains are truncated to adjacent
/// pairs (`a.b.c` yields `a.b` and `b.c`). Lexically robust: unbalanced
/// input still tokenizes.
pub fn tokenize(source: &str) -> TokenStream {
    let code = lexer::lex_code_tokens(source);
    let mut out = Vec::new();
    for (i, tok) in code.iter().enumerate() {
        if tok.kind != CodeTokenKind::Ident {
            continue;
        }
        let word = lexer::lower_ident(source, tok);
        let reserved = lexer::is_reserved(&word);
        // Adjacent `ident . ident` pair, both sides unreserved.
        if !reserved {
            if let (Some(dot), Some(next)) = (code.get(i + 1), code.get(i + 2)) {
                if dot.kind == CodeTokenKind::Punct('.') && next.kind == CodeTokenKind::Ident {
                    let next_word = lexer::lower_ident(source, next);
                    if !lexer::is_reserved(&next_word) {
                        out.push(alloc::format!("{word}.{next_word}"));
                    }
                }
            }
        }
        if !reserved {
            out.push(word);
        }
    }
    TokenStream { tokens: out }
}
