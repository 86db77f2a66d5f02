//! Experiment orchestration: split, per-fold fresh-reload training with
//! fold-local mining, clean evaluation, and the stress harness.

use std::collections::{BTreeMap, BTreeSet};

use flakesift_core::augment::{
    perturb_for_stress, rename_variables, AugmentationPolicy, PerturbMode, RenameScheme,
};
use flakesift_core::corpus::{tokenize, Corpus};
use flakesift_core::dtm::{mine, SymbolicVocabulary};
use flakesift_core::eval::{
    metrics_from_predictions, robustness_drops, MetricsReport, RobustnessReport,
};
use flakesift_core::model::{init_params, ModelConfig, NeuralVocab};
use flakesift_core::splitter::plan_splits;
use flakesift_core::symbolic::FeatureGroupSpec;
use flakesift_core::trainer::{predict_source, train_fold, FoldResult, Prediction};
use flakesift_core::{FlakinessCategory, SplitPlan};

use crate::config::RunConfig;
use crate::error::{AppError, AppResult};

/// Everything produced by one fold of a run.
pub struct FoldRun {
    pub result: FoldResult,
    /// Mined vocabulary before any ablation (used for decoy pools and
    /// token-rank reporting even when extraction zeroes the DTM slots).
    pub mined: SymbolicVocabulary,
    pub policy: AugmentationPolicy,
}

pub struct RunOutcome {
    pub plan: SplitPlan,
    pub folds: Vec<FoldRun>,
    pub pooled: MetricsReport,
    pub robustness: Option<RobustnessReport>,
}

/// Pick two disjoint decoy pools from the mined vocabulary.
///
/// Only mined tokens that occur as declared local variables in the
/// training fold are used as decoys: they are the semantic-name shortcuts
/// the model must learn to distrust, and injecting them never teaches it
/// to ignore genuine API evidence. Within each category the ranked
/// variable tokens alternate between the training pool (spoofed during
/// augmentation) and the stress pool (held back as the unseen attack).
pub fn decoy_pools(vocab: &SymbolicVocabulary, train: &Corpus) -> (Vec<String>, Vec<String>) {
    let mut declared = BTreeSet::new();
    for t in train.tests() {
        let (_, map) = rename_variables(&t.source, RenameScheme::VarK, 0);
        for name in map.keys() {
            declared.insert(name.to_lowercase());
        }
    }
    let mut train_pool = BTreeSet::new();
    let mut stress_pool = BTreeSet::new();
    for c in FlakinessCategory::ALL {
        let mut next_is_train = true;
        for entry in vocab.entries(c) {
            if !declared.contains(&entry.token) {
                continue;
            }
            if train_pool.contains(&entry.token) || stress_pool.contains(&entry.token) {
                continue;
            }
            if next_is_train {
                train_pool.insert(entry.token.clone());
            } else {
                stress_pool.insert(entry.token.clone());
            }
            next_is_train = !next_is_train;
        }
    }
    (train_pool.into_iter().collect(), stress_pool.into_iter().collect())
}

fn empty_vocab(mined: &SymbolicVocabulary) -> SymbolicVocabulary {
    SymbolicVocabulary { params: mined.params, categories: BTreeMap::new() }
}

/// Execute a full cross-validated experiment.
pub fn run_experiment(corpus: &Corpus, config: &RunConfig) -> AppResult<RunOutcome> {
    config.validate()?;
    let mut model_config = config.model;
    model_config.use_symbolic = !config.no_symbolic;
    let group_spec = FeatureGroupSpec::standard();
    let plan = plan_splits(corpus, config.split_k, config.split_seed)?;

    let mut folds = Vec::with_capacity(plan.k);
    let mut first_checksum: Option<String> = None;
    for (fold_idx, fold) in plan.folds.iter().enumerate() {
        let train = corpus.subset(&fold.train)?;
        let test = corpus.subset(&fold.test)?;
        let init_checksum = init_params(&model_config)?.checksum();
        if let Some(first) = &first_checksum {
            if *first != init_checksum {
                return Err(AppError::internal("init checksum drifted across folds"));
            }
        } else {
            first_checksum = Some(init_checksum.clone());
        }

        let mined = mine(&train, &config.mining)?;
        let extraction_vocab =
            if config.hardcoded_symbols { empty_vocab(&mined) } else { mined.clone() };
        let (train_decoys, stress_decoys) = decoy_pools(&mined, &train);
        let policy = AugmentationPolicy::new(train_decoys, stress_decoys, config.training.seed);
        policy.validate()?;

        let mut training = config.training.clone();
        training.augmentation = if config.no_augment { None } else { Some(policy.clone()) };

        let streams: Vec<_> = train.tests().iter().map(|t| tokenize(&t.source)).collect();
        let neural_vocab = NeuralVocab::build(&streams, model_config.vocab_cap);
        let (state, trace) = train_fold(
            &train,
            &extraction_vocab,
            &neural_vocab,
            &group_spec,
            &model_config,
            &training,
        )?;

        let mut result = FoldResult {
            fold: fold_idx,
            init_checksum,
            final_checksum: state.checksum(),
            dtm_vocab: extraction_vocab,
            neural_vocab,
            state,
            trace,
            predictions: Vec::with_capacity(test.len()),
        };
        for t in test.tests() {
            let predicted = predict_source(&t.source, &result, &group_spec, &model_config)?;
            result.predictions.push(Prediction { id: t.id.clone(), actual: t.label, predicted });
        }
        folds.push(FoldRun { result, mined, policy });
    }

    let all_preds: Vec<Prediction> =
        folds.iter().flat_map(|f| f.result.predictions.iter().cloned()).collect();
    let pooled = metrics_from_predictions(&all_preds)?;

    let robustness = if config.stress {
        Some(pooled_stress(corpus, &plan, &folds, &pooled, &group_spec, &model_config)?)
    } else {
        None
    };

    Ok(RunOutcome { plan, folds, pooled, robustness })
}

/// Perturb every fold's test set under each mode, predict with that fold's
/// model, pool predictions across folds, and compute drops against the
/// pooled clean metrics.
fn pooled_stress(
    corpus: &Corpus,
    plan: &SplitPlan,
    folds: &[FoldRun],
    clean: &MetricsReport,
    group_spec: &FeatureGroupSpec,
    model_config: &ModelConfig,
) -> AppResult<RobustnessReport> {
    let modes = PerturbMode::all();
    let mut perturbed = BTreeMap::new();
    for mode in modes {
        let mut preds: Vec<(FlakinessCategory, FlakinessCategory)> = Vec::new();
        for (fold, run) in plan.folds.iter().zip(folds) {
            let test = corpus.subset(&fold.test)?;
            for t in test.tests() {
                let p = perturb_for_stress(t, mode, &run.policy);
                let predicted =
                    predict_source(&p.source, &run.result, group_spec, model_config)?;
                preds.push((predicted, t.label));
            }
        }
        let (p, a): (Vec<_>, Vec<_>) = preds.into_iter().unzip();
        perturbed.insert(mode, flakesift_core::eval::f1_scores(&p, &a)?);
    }
    Ok(robustness_drops(clean, &perturbed, &modes)?)
}
