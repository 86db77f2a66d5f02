//! Training loop, AdamW optimizer, and the K-fold cross-validation
//! orchestrator with fresh reload per fold.

use alloc::string::String;
use alloc::vec::Vec;
use libm::sqrt;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_training, AugmentationPolicy};
use crate::category::FlakinessCategory;
use crate::corpus::{tokenize, Corpus};
use crate::dtm::{mine, MiningParams, SymbolicVocabulary};
use crate::error::{CoreError, CoreResult};
use crate::loss::{
    binary_class, binary_focal_from_logits, ens_weights, total_loss_grad, weighted_categorical_ce,
    ClassWeights, FocalParams, LossWeights,
};
use crate::model::{
    backward, forward, init_params, predict, Logits, ModelConfig, ModelState, NeuralVocab, ParamSet,
};
use crate::rng::derive_rng;
use crate::splitter::SplitPlan;
use crate::symbolic::{extract_from_stream, FeatureGroupSpec};

/// Optimizer and loop hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta_ens: f64,
    pub focal: FocalParams,
    pub loss_weights: LossWeights,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub augmentation: Option<AugmentationPolicy>,
    pub seed: u64,
}

impl TrainingConfig {
    /// Published hyperparameters: lr 2e-5 targets fine-tuning a pre-trained
    /// backbone.
    pub fn paper_parity(seed: u64) -> Self {
        TrainingConfig {
            learning_rate: 2e-5,
            weight_decay: 0.01,
            epochs: 8,
            batch_size: 16,
            beta_ens: 0.9999,
            focal: FocalParams::default(),
            loss_weights: LossWeights::default(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            augmentation: None,
            seed,
        }
    }

    /// From-scratch preset: a randomly initialized encoder needs a much
    /// larger learning rate than a pre-trained one.
    pub fn from_scratch(seed: u64) -> Self {
        TrainingConfig { learning_rate: 1e-3, ..Self::paper_parity(seed) }
    }

    pub fn validate(&self) -> CoreResult<()> {
        if self.epochs == 0 {
            return Err(CoreError::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CoreError::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(CoreError::InvalidArgument("learning_rate must be > 0".into()));
        }
        if let Some(p) = &self.augmentation {
            p.validate()?;
        }
        Ok(())
    }
}

/// Mean losses for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub total: f64,
    pub binary: f64,
    pub categorical: f64,
}

/// Per-fold training record. Timing is deliberately absent so serialized
/// traces stay byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochStats>,
    pub class_weights: ClassWeights,
    pub warnings: Vec<String>,
}

/// AdamW with decoupled weight decay; moments persist across steps.
pub struct AdamW {
    m: ParamSet,
    v: ParamSet,
    step: u64,
}

impl AdamW {
    pub fn new(template: &ParamSet) -> AdamW {
        AdamW { m: ParamSet::zeros_like(template), v: ParamSet::zeros_like(template), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: m <- b1 m + (1-b1) g; v <- b2 v + (1-b2) g^2;
    /// theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta).
    pub fn step(
        &mut self,
        state: &mut ModelState,
        grads: &ParamSet,
        config: &TrainingConfig,
    ) -> CoreResult<()> {
        if !grads.is_finite() {
            return Err(CoreError::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(config.beta1, t as f64);
        let bc2 = 1.0 - libm::pow(config.beta2, t as f64);
        for (((_, theta), (_, m)), ((_, v), (_, g))) in state
            .params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut().into_iter().zip(grads.tensors()))
        {
            if theta.len() != g.len() {
                return Err(CoreError::ShapeMismatch("gradient/parameter length".into()));
            }
            for i in 0..theta.len() {
                m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
                v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= config.learning_rate
                    * (m_hat / (sqrt(v_hat) + config.epsilon) + config.weight_decay * theta[i]);
            }
        }
        Ok(())
    }
}

/// Train one fold from fresh parameters over its train set only.
///
/// Each epoch: seeded shuffle, optional per-example augmentation (with a
/// per-test derived stream, so order never matters), batched gradient
/// steps with the last partial batch kept.
pub fn train_fold(
    train: &Corpus,
    dtm_vocab: &SymbolicVocabulary,
    neural_vocab: &NeuralVocab,
    group_spec: &FeatureGroupSpec,
    model_config: &ModelConfig,
    config: &TrainingConfig,
) -> CoreResult<(ModelState, TrainingTrace)> {
    config.validate()?;
    if train.is_empty() {
        return Err(CoreError::EmptyCorpus);
    }
    let mut warnings = Vec::new();
    if train.category_counts().len() < 2 {
        warnings.push(String::from("train set has a single class; ENS weighting is degenerate"));
    }
    let class_weights = ens_weights(train.category_counts(), config.beta_ens)?;
    let mut state = init_params(model_config)?;
    let mut opt = AdamW::new(&state.params);
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut derive_rng(config.seed, &alloc::format!("shuffle/e{epoch}")));

        let mut sum_total = 0.0;
        let mut sum_bin = 0.0;
        let mut sum_cat = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = ParamSet::zeros_like(&state.params);
            let inv_b = 1.0 / batch.len() as f64;
            for &idx in batch {
                let test = &train.tests()[idx];
                let example = match &config.augmentation {
                    Some(policy) => {
                        let mut rng = derive_rng(
                            config.seed,
                            &alloc::format!("aug/e{epoch}/{}", test.id),
                        );
                        augment_training(test, policy, &mut rng)
                    }
                    None => test.clone(),
                };
                let stream = tokenize(&example.source);
                let ids = neural_vocab.map_stream(&stream, model_config.max_seq);
                let features = extract_from_stream(&stream, dtm_vocab, group_spec);
                let mut drop_rng =
                    derive_rng(config.seed, &alloc::format!("dropout/e{epoch}/{}", test.id));
                let (logits, cache) =
                    forward(&ids, &features, &state, model_config, true, Some(&mut drop_rng))?;
                let bin = binary_focal_from_logits(
                    &logits.binary,
                    binary_class(example.label),
                    &config.focal,
                )?;
                let cat = weighted_categorical_ce(&logits.categorical, example.label, &class_weights)?;
                sum_bin += bin;
                sum_cat += cat;
                sum_total +=
                    config.loss_weights.lambda_bin * bin + config.loss_weights.lambda_cat * cat;
                let (mut d_bin, mut d_cat) = total_loss_grad(
                    &logits,
                    example.label,
                    &class_weights,
                    &config.focal,
                    &config.loss_weights,
                )?;
                for g in &mut d_bin {
                    *g *= inv_b;
                }
                for g in &mut d_cat {
                    *g *= inv_b;
                }
                backward(&cache, &state, model_config, &d_bin, &d_cat, &mut grads);
            }
            opt.step(&mut state, &grads, config)?;
        }
        let n = train.len() as f64;
        epochs.push(EpochStats {
            total: sum_total / n,
            binary: sum_bin / n,
            categorical: sum_cat / n,
        });
    }

    Ok((state, TrainingTrace { epochs, class_weights, warnings }))
}

/// One evaluated prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub actual: FlakinessCategory,
    pub predicted: FlakinessCategory,
}

/// Everything produced by one cross-validation fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub init_checksum: String,
    pub final_checksum: String,
    pub dtm_vocab: SymbolicVocabulary,
    pub neural_vocab: NeuralVocab,
    pub state: ModelState,
    pub trace: TrainingTrace,
    pub predictions: Vec<Prediction>,
}

/// Eval-mode prediction for one source text under a fold's vocabularies.
pub fn predict_source(
    source: &str,
    fold: &FoldResult,
    group_spec: &FeatureGroupSpec,
    model_config: &ModelConfig,
) -> CoreResult<FlakinessCategory> {
    let logits = eval_logits(source, fold, group_spec, model_config)?;
    predict(&logits)
}

pub fn eval_logits(
    source: &str,
    fold: &FoldResult,
    group_spec: &FeatureGroupSpec,
    model_config: &ModelConfig,
) -> CoreResult<Logits> {
    let stream = tokenize(source);
    let ids = fold.neural_vocab.map_stream(&stream, model_config.max_seq);
    let features = extract_from_stream(&stream, &fold.dtm_vocab, group_spec);
    let (logits, _) = forward(&ids, &features, &fold.state, model_config, false, None)?;
    Ok(logits)
}

/// K-fold cross-validation with fresh reload.
///
/// Per fold: re-initialize parameters from the same seed (identical init
/// checksums), mine the DTM vocabulary and build the neural vocabulary
/// from that fold's train set only, train, and predict the fold's test
/// set. Predictions pool across folds for aggregate metrics.
pub fn cross_validate(
    corpus: &Corpus,
    plan: &SplitPlan,
    mining: &MiningParams,
    group_spec: &FeatureGroupSpec,
    model_config: &ModelConfig,
    config: &TrainingConfig,
) -> CoreResult<Vec<FoldResult>> {
    let mut results = Vec::with_capacity(plan.k);
    let mut first_checksum: Option<String> = None;
    for (fold_idx, fold) in plan.folds.iter().enumerate() {
        let train = corpus.subset(&fold.train)?;
        let test = corpus.subset(&fold.test)?;
        let init_checksum = init_params(model_config)?.checksum();
        match &first_checksum {
            None => first_checksum = Some(init_checksum.clone()),
            Some(c) => {
                if *c != init_checksum {
                    return Err(CoreError::NonFinite(
                        "fresh-reload violation: init checksums differ across folds".into(),
                    ));
                }
            }
        }
        let dtm_vocab = mine(&train, mining)?;
        let streams: Vec<_> = train.tests().iter().map(|t| tokenize(&t.source)).collect();
        let neural_vocab = NeuralVocab::build(&streams, model_config.vocab_cap);
        let (state, trace) =
            train_fold(&train, &dtm_vocab, &neural_vocab, group_spec, model_config, config)?;
        let mut fold_result = FoldResult {
            fold: fold_idx,
            init_checksum,
            final_checksum: state.checksum(),
            dtm_vocab,
            neural_vocab,
            state,
            trace,
            predictions: Vec::with_capacity(test.len()),
        };
        for t in test.tests() {
            let predicted = predict_source(&t.source, &fold_result, group_spec, model_config)?;
            fold_result.predictions.push(Prediction {
                id: t.id.clone(),
                actual: t.label,
                predicted,
            });
        }
        results.push(fold_result);
    }
    Ok(results)
}
