//! Stratified project-wise disjoint K-fold splitting.
//!
//! Each project gets one priority label (the most critical flakiness type
//! it contains), projects are grouped by that label, and each group is
//! shuffled (seeded) then dealt round-robin: fold = position mod K.
//! Projects are sorted lexicographically before shuffling so assignment
//! depends only on (corpus, seed), not input order.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::category::FlakinessCategory;
use crate::corpus::{Corpus, TestCase};
use crate::error::{CoreError, CoreResult};
use crate::rng::derive_rng;

/// Criticality order used for priority labeling.
pub const PRIORITY_ORDER: [FlakinessCategory; 6] = [
    FlakinessCategory::Concurrency,
    FlakinessCategory::AsyncWait,
    FlakinessCategory::OrderDependency,
    FlakinessCategory::Time,
    FlakinessCategory::UnorderedCollections,
    FlakinessCategory::NonFlaky,
];

/// One project with its priority category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectPriorityLabel {
    pub project: String,
    pub priority_category: FlakinessCategory,
}

/// Train/test test-id sets for one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

/// A complete, replayable K-fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub k: usize,
    pub seed: u64,
    /// project -> fold index.
    pub assignment: BTreeMap<String, usize>,
    pub folds: Vec<Fold>,
}

/// The most critical category present among a project's tests.
pub fn priority_label(project_tests: &[&TestCase]) -> CoreResult<FlakinessCategory> {
    if project_tests.is_empty() {
        return Err(CoreError::InvalidArgument("priority_label needs at least one test".into()));
    }
    let present: BTreeSet<FlakinessCategory> =
        project_tests.iter().map(|t| t.label).collect();
    Ok(*PRIORITY_ORDER
        .iter()
        .find(|c| present.contains(c))
        .expect("every label is in the priority order"))
}

/// Label every project in the corpus.
pub fn label_projects(corpus: &Corpus) -> CoreResult<Vec<ProjectPriorityLabel>> {
    let mut by_project: BTreeMap<&str, Vec<&TestCase>> = BTreeMap::new();
    for t in corpus.tests() {
        by_project.entry(t.project.as_str()).or_default().push(t);
    }
    by_project
        .into_iter()
        .map(|(p, tests)| {
            Ok(ProjectPriorityLabel {
                project: String::from(p),
                priority_category: priority_label(&tests)?,
            })
        })
        .collect()
}

/// Stratified round-robin fold assignment.
///
/// Within each priority category the (lexicographically sorted) projects
/// are shuffled with a category-derived stream, then project i goes to
/// fold i mod K.
pub fn assign_folds(
    labels: &[ProjectPriorityLabel],
    k: usize,
    seed: u64,
) -> CoreResult<BTreeMap<String, usize>> {
    if k < 2 {
        return Err(CoreError::InvalidArgument("fold count must be >= 2".into()));
    }
    if labels.len() < k {
        return Err(CoreError::Split(alloc::format!(
            "{} projects cannot fill {k} folds",
            labels.len()
        )));
    }
    let mut groups: BTreeMap<FlakinessCategory, Vec<&str>> = BTreeMap::new();
    for l in labels {
        groups.entry(l.priority_category).or_default().push(l.project.as_str());
    }
    let mut assignment = BTreeMap::new();
    for (cat, mut projects) in groups {
        projects.sort_unstable();
        let mut rng = derive_rng(seed, &alloc::format!("split/{}", cat.as_str()));
        projects.shuffle(&mut rng);
        for (i, p) in projects.into_iter().enumerate() {
            assignment.insert(String::from(p), i % k);
        }
    }
    Ok(assignment)
}

/// Expand a project assignment into per-fold train/test id sets.
pub fn make_splits(
    corpus: &Corpus,
    assignment: &BTreeMap<String, usize>,
    k: usize,
    seed: u64,
) -> CoreResult<SplitPlan> {
    let mut folds = alloc::vec![Fold { train: BTreeSet::new(), test: BTreeSet::new() }; k];
    for t in corpus.tests() {
        let fold = *assignment.get(&t.project).ok_or_else(|| {
            CoreError::Split(alloc::format!("project {:?} has no fold assignment", t.project))
        })?;
        if fold >= k {
            return Err(CoreError::Split(alloc::format!("fold index {fold} out of range")));
        }
        for (i, f) in folds.iter_mut().enumerate() {
            if i == fold {
                f.test.insert(t.id.clone());
            } else {
                f.train.insert(t.id.clone());
            }
        }
    }
    Ok(SplitPlan { k, seed, assignment: assignment.clone(), folds })
}

/// End-to-end: label, assign, expand.
pub fn plan_splits(corpus: &Corpus, k: usize, seed: u64) -> CoreResult<SplitPlan> {
    let labels = label_projects(corpus)?;
    let assignment = assign_folds(&labels, k, seed)?;
    make_splits(corpus, &assignment, k, seed)
}
