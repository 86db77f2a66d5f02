//! Metrics (per-class F1, macro F1, confusion matrix) and the robustness
//! stress harness with percentage-point drop accounting.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::augment::{perturb_for_stress, AugmentationPolicy, PerturbMode};
use crate::category::FlakinessCategory;
use crate::corpus::Corpus;
use crate::error::{CoreError, CoreResult};
use crate::model::ModelConfig;
use crate::symbolic::FeatureGroupSpec;
use crate::trainer::{predict_source, FoldResult, Prediction};

/// 6x6 counts; rows = actual category, columns = predicted, enum order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 6]; 6],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn get(&self, actual: FlakinessCategory, predicted: FlakinessCategory) -> u64 {
        self.counts[actual.index()][predicted.index()]
    }

    /// Row sum: number of evaluated tests with this actual label.
    pub fn support(&self, c: FlakinessCategory) -> u64 {
        self.counts[c.index()].iter().sum()
    }
}

/// Per-class precision/recall/F1 in percent, plus macro F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class: BTreeMap<FlakinessCategory, ClassMetrics>,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

impl MetricsReport {
    pub fn f1(&self, c: FlakinessCategory) -> f64 {
        self.per_class.get(&c).map(|m| m.f1).unwrap_or(0.0)
    }
}

/// Count a confusion matrix from paired predictions and labels.
pub fn confusion(
    predictions: &[FlakinessCategory],
    labels: &[FlakinessCategory],
) -> CoreResult<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut counts = [[0u64; 6]; 6];
    for (&p, &a) in predictions.iter().zip(labels) {
        counts[a.index()][p.index()] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Per-class and macro F1 with the zero-division-equals-zero rule:
/// precision, recall, and F1 all fall back to 0 when their denominators
/// vanish, and every class counts toward the macro average regardless of
/// support.
pub fn f1_scores(
    predictions: &[FlakinessCategory],
    labels: &[FlakinessCategory],
) -> CoreResult<MetricsReport> {
    let cm = confusion(predictions, labels)?;
    metrics_from_confusion(cm)
}

pub fn metrics_from_confusion(cm: ConfusionMatrix) -> CoreResult<MetricsReport> {
    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for c in FlakinessCategory::ALL {
        let i = c.index();
        let tp = cm.counts[i][i] as f64;
        let pred_pos: f64 = (0..6).map(|r| cm.counts[r][i] as f64).sum();
        let actual_pos: f64 = cm.counts[i].iter().map(|&x| x as f64).sum();
        let precision = if pred_pos > 0.0 { tp / pred_pos } else { 0.0 };
        let recall = if actual_pos > 0.0 { tp / actual_pos } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        f1_sum += f1;
        per_class.insert(
            c,
            ClassMetrics {
                precision: precision * 100.0,
                recall: recall * 100.0,
                f1: f1 * 100.0,
                support: cm.support(c),
            },
        );
    }
    Ok(MetricsReport { per_class, macro_f1: f1_sum / 6.0 * 100.0, confusion: cm })
}

pub fn metrics_from_predictions(preds: &[Prediction]) -> CoreResult<MetricsReport> {
    let p: Vec<FlakinessCategory> = preds.iter().map(|x| x.predicted).collect();
    let a: Vec<FlakinessCategory> = preds.iter().map(|x| x.actual).collect();
    f1_scores(&p, &a)
}

/// Clean metrics, per-mode perturbed metrics, and pp drops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub clean: MetricsReport,
    pub perturbed: BTreeMap<PerturbMode, MetricsReport>,
    /// Per mode: per-class drop (clean F1 - perturbed F1, percentage
    /// points; negative means the perturbation helped) and the mean of the
    /// six per-class drops.
    pub drops: BTreeMap<PerturbMode, ModeDrops>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDrops {
    pub per_class: BTreeMap<FlakinessCategory, f64>,
    pub average: f64,
}

impl PerturbMode {
    pub fn all() -> [PerturbMode; 3] {
        [PerturbMode::Rename, PerturbMode::DeadCode, PerturbMode::Both]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PerturbMode::Rename => "rename",
            PerturbMode::DeadCode => "deadcode",
            PerturbMode::Both => "both",
        }
    }
}

// BTreeMap keys need an order; enum declaration order is fine.
impl PartialOrd for PerturbMode {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PerturbMode {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (*self as u8).cmp(&(*other as u8))
    }
}

/// Drop arithmetic: exactly clean minus perturbed, per class and averaged.
pub fn robustness_drops(
    clean: &MetricsReport,
    perturbed: &BTreeMap<PerturbMode, MetricsReport>,
    modes: &[PerturbMode],
) -> CoreResult<RobustnessReport> {
    let mut drops = BTreeMap::new();
    for mode in modes {
        let report = perturbed
            .get(mode)
            .ok_or_else(|| CoreError::InvalidArgument(alloc::format!("missing mode {}", mode.as_str())))?;
        let per_class: BTreeMap<FlakinessCategory, f64> = FlakinessCategory::ALL
            .into_iter()
            .map(|c| (c, clean.f1(c) - report.f1(c)))
            .collect();
        let average = per_class.values().sum::<f64>() / per_class.len() as f64;
        drops.insert(*mode, ModeDrops { per_class, average });
    }
    Ok(RobustnessReport { clean: clean.clone(), perturbed: perturbed.clone(), drops })
}

/// Stress-evaluate one fold's model on its test set.
///
/// Every mode perturbs 100% of the test examples (stress is deterministic,
/// unlike training's probabilistic augmentation), and features are
/// re-extracted from the perturbed source so the symbolic channel sees the
/// attack too.
pub fn stress_evaluate(
    fold: &FoldResult,
    test_set: &Corpus,
    policy: &AugmentationPolicy,
    modes: &[PerturbMode],
    group_spec: &FeatureGroupSpec,
    model_config: &ModelConfig,
) -> CoreResult<RobustnessReport> {
    let labels: Vec<FlakinessCategory> = test_set.tests().iter().map(|t| t.label).collect();
    let clean_preds: Vec<FlakinessCategory> = test_set
        .tests()
        .iter()
        .map(|t| predict_source(&t.source, fold, group_spec, model_config))
        .collect::<CoreResult<_>>()?;
    let clean = f1_scores(&clean_preds, &labels)?;

    let mut perturbed = BTreeMap::new();
    for mode in modes {
        let preds: Vec<FlakinessCategory> = test_set
            .tests()
            .iter()
            .map(|t| {
                let p = perturb_for_stress(t, *mode, policy);
                predict_source(&p.source, fold, group_spec, model_config)
            })
            .collect::<CoreResult<_>>()?;
        perturbed.insert(*mode, f1_scores(&preds, &labels)?);
    }
    robustness_drops(&clean, &perturbed, modes)
}

/// Pool predictions from all folds into one metrics report.
pub fn pooled_metrics(folds: &[FoldResult]) -> CoreResult<MetricsReport> {
    let all: Vec<Prediction> =
        folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
    metrics_from_predictions(&all)
}

/// Average the per-class drops of several robustness reports (used to pool
/// stress results across folds).
pub fn average_drops(reports: &[RobustnessReport], modes: &[PerturbMode]) -> BTreeMap<PerturbMode, f64> {
    let mut out = BTreeMap::new();
    if reports.is_empty() {
        return out;
    }
    for mode in modes {
        let sum: f64 = reports.iter().filter_map(|r| r.drops.get(mode)).map(|d| d.average).sum();
        out.insert(*mode, sum / reports.len() as f64);
    }
    out
}

/// Human-readable mode label used in file outputs.
impl core::fmt::Display for PerturbMode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}
