//! Discriminative token mining: per-category chi-square scoring with
//! significance, cross-project consistency, and top-K selection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::category::FlakinessCategory;
use crate::corpus::{tokenize, Corpus};
use crate::error::{CoreError, CoreResult};
use crate::stats::{chi_square, p_value_chi2_1dof, ContingencyTable};
use crate::tfidf::build_tfidf_from_streams;

/// Mining knobs: top-K limit, project-support threshold, significance level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiningParams {
    pub top_k: usize,
    pub min_project_support: usize,
    pub p_max: f64,
}

impl Default for MiningParams {
    fn default() -> Self {
        MiningParams { top_k: 10, min_project_support: 3, p_max: 0.05 }
    }
}

/// One retained token with its statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareScore {
    pub token: String,
    pub category: FlakinessCategory,
    pub chi2: f64,
    pub p_value: f64,
    /// Distinct training projects contributing category-c documents that
    /// contain the token.
    pub project_support: usize,
}

/// Mined vocabulary: per-category ranked score lists plus the parameters
/// that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolicVocabulary {
    pub params: MiningParams,
    pub categories: BTreeMap<FlakinessCategory, Vec<ChiSquareScore>>,
}

impl SymbolicVocabulary {
    /// Ranked entries for one category (empty slice when nothing survived).
    pub fn entries(&self, c: FlakinessCategory) -> &[ChiSquareScore] {
        self.categories.get(&c).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Every retained token across categories, deduplicated.
    pub fn all_tokens(&self) -> BTreeSet<&str> {
        self.categories
            .values()
            .flat_map(|v| v.iter().map(|s| s.token.as_str()))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.values().all(|v| v.is_empty())
    }
}

/// Mine the symbolic vocabulary from a training corpus.
///
/// For each category, builds a presence-based 2x2 contingency table per
/// token, keeps tokens with `p < p_max` and project support >=
/// `min_project_support`, then the top-K by descending chi-square
/// (lexicographic tie-break). Deterministic and independent of corpus
/// ordering.
pub fn mine(corpus: &Corpus, params: &MiningParams) -> CoreResult<SymbolicVocabulary> {
    if corpus.is_empty() {
        return Err(CoreError::EmptyCorpus);
    }
    if params.top_k == 0 {
        return Err(CoreError::InvalidArgument("top_k must be >= 1".into()));
    }
    let present: Vec<FlakinessCategory> = FlakinessCategory::ALL
        .into_iter()
        .filter(|&c| corpus.category_count(c) > 0)
        .collect();
    if present.len() < 2 {
        return Err(CoreError::NoContrastClass);
    }

    let streams: Vec<_> = corpus.tests().iter().map(|t| tokenize(&t.source)).collect();
    // Alg. line: vectorize with the Java-keyword stoplist; the matrix
    // vocabulary is the candidate token set.
    let matrix = build_tfidf_from_streams(&streams)?;
    let n_docs = corpus.len() as u64;

    // Presence counts per token per category, and supporting projects on
    // the positive class.
    let mut per_cat_presence: BTreeMap<&str, [u64; 6]> = BTreeMap::new();
    let mut support: BTreeMap<(usize, &str), BTreeSet<&str>> = BTreeMap::new();
    for (doc, test) in corpus.tests().iter().enumerate() {
        let ci = test.label.index();
        for token in streams[doc].distinct() {
            per_cat_presence.entry(token).or_insert([0; 6])[ci] += 1;
            support.entry((ci, token)).or_default().insert(test.project.as_str());
        }
    }

    let mut categories: BTreeMap<FlakinessCategory, Vec<ChiSquareScore>> = BTreeMap::new();
    for c in FlakinessCategory::ALL {
        let n_c = corpus.category_count(c) as u64;
        let mut kept: Vec<ChiSquareScore> = Vec::new();
        if n_c > 0 {
            for token in &matrix.vocabulary {
                let counts = per_cat_presence.get(token.as_str()).expect("token is in vocabulary");
                let present_total: u64 = counts.iter().sum();
                let o11 = counts[c.index()];
                let table = ContingencyTable {
                    o11,
                    o12: present_total - o11,
                    o21: n_c - o11,
                    o22: (n_docs - n_c) - (present_total - o11),
                };
                let result = chi_square(&table)?;
                if result.degenerate {
                    continue;
                }
                let p_value = p_value_chi2_1dof(result.chi2)?;
                if p_value >= params.p_max {
                    continue;
                }
                let project_support = support
                    .get(&(c.index(), token.as_str()))
                    .map(|s| s.len())
                    .unwrap_or(0);
                if project_support < params.min_project_support {
                    continue;
                }
                kept.push(ChiSquareScore {
                    token: token.clone(),
                    category: c,
                    chi2: result.chi2,
                    p_value,
                    project_support,
                });
            }
            kept.sort_by(|a, b| {
                b.chi2.partial_cmp(&a.chi2).unwrap().then_with(|| a.token.cmp(&b.token))
            });
            kept.truncate(params.top_k);
        }
        categories.insert(c, kept);
    }

    Ok(SymbolicVocabulary { params: *params, categories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TestCase;
    use alloc::format;
    use alloc::vec::Vec;

    /// Planted-signal corpus: "countdownlatch" appears in 9/10 concurrency
    /// tests spread over `n_projects` projects, and in 1/90 others.
    fn planted(n_projects: usize) -> Corpus {
        let mut tests = Vec::new();
        for i in 0..10 {
            let body = if i < 9 {
                "void t(){ CountDownLatch latch; latch.countDown(); }"
            } else {
                "void t(){ int x = 0; }"
            };
            tests.push(TestCase {
                id: format!("c{i}"),
                project: format!("p{}", i % n_projects),
                source: body.into(),
                label: FlakinessCategory::Concurrency,
            });
        }
        for i in 0..90 {
            let body = if i == 0 {
                "void t(){ CountDownLatch latch; }"
            } else {
                "void t(){ assertEquals(a, b); }"
            };
            tests.push(TestCase {
                id: format!("n{i}"),
                project: format!("q{}", i % 10),
                source: body.into(),
                label: FlakinessCategory::NonFlaky,
            });
        }
        Corpus::new(tests).unwrap()
    }

    #[test]
    fn planted_token_ranks_in_top_k() {
        let vocab = mine(&planted(4), &MiningParams::default()).unwrap();
        let conc = vocab.entries(FlakinessCategory::Concurrency);
        assert!(
            conc.iter().any(|s| s.token == "countdownlatch"),
            "mined: {:?}",
            conc.iter().map(|s| &s.token).collect::<Vec<_>>()
        );
        for s in conc {
            assert!(s.p_value < 0.05);
            assert!(s.project_support >= 3);
        }
    }

    #[test]
    fn low_project_support_excluded() {
        let vocab = mine(&planted(2), &MiningParams::default()).unwrap();
        let conc = vocab.entries(FlakinessCategory::Concurrency);
        assert!(!conc.iter().any(|s| s.token == "countdownlatch"));
    }

    #[test]
    fn uniform_token_excluded() {
        // "assertequals" appears everywhere in the non-flaky class and
        // nowhere in concurrency, so it can be significant for non-flaky,
        // but a token spread evenly across categories must not survive.
        let mut tests = Vec::new();
        for i in 0..40 {
            let label = FlakinessCategory::ALL[i % 6];
            tests.push(TestCase {
                id: format!("t{i}"),
                project: format!("p{}", i % 8),
                source: "void t(){ commonHelper(); }".into(),
                label,
            });
        }
        let corpus = Corpus::new(tests).unwrap();
        let vocab = mine(&corpus, &MiningParams::default()).unwrap();
        assert!(vocab.all_tokens().is_empty(), "independent token must not be retained");
    }

    #[test]
    fn single_category_is_an_error() {
        let tests = (0..5)
            .map(|i| TestCase {
                id: format!("t{i}"),
                project: "p".into(),
                source: "void t(){}".into(),
                label: FlakinessCategory::NonFlaky,
            })
            .collect();
        let corpus = Corpus::new(tests).unwrap();
        assert_eq!(mine(&corpus, &MiningParams::default()).unwrap_err(), CoreError::NoContrastClass);
    }

    #[test]
    fn retained_entries_ranked_descending() {
        let vocab = mine(&planted(5), &MiningParams::default()).unwrap();
        for c in FlakinessCategory::ALL {
            let entries = vocab.entries(c);
            assert!(entries.len() <= vocab.params.top_k);
            for w in entries.windows(2) {
                assert!(w[0].chi2 >= w[1].chi2);
            }
        }
    }
}
