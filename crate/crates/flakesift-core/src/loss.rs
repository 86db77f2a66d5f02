//! Imbalance-aware objective: ENS class weights, binary focal loss,
//! weighted categorical cross-entropy, and their combination.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use libm::{exp, log, pow};
use serde::{Deserialize, Serialize};

use crate::category::FlakinessCategory;
use crate::error::{CoreError, CoreResult};
use crate::model::Logits;

/// Floor applied before every logarithm. Bounds the maximum per-term loss
/// at about `27.6 * alpha * w`.
pub const LOG_CLAMP: f64 = 1e-12;

/// Per-category ENS weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub beta: f64,
    pub weights: BTreeMap<FlakinessCategory, f64>,
}

impl ClassWeights {
    pub fn get(&self, c: FlakinessCategory) -> CoreResult<f64> {
        self.weights
            .get(&c)
            .copied()
            .ok_or_else(|| CoreError::InvalidArgument(alloc::format!("no weight for class {c}")))
    }

    /// Uniform weights (no reweighting), for ablations.
    pub fn uniform() -> Self {
        ClassWeights {
            beta: 0.0,
            weights: FlakinessCategory::ALL.into_iter().map(|c| (c, 1.0)).collect(),
        }
    }
}

/// Focal-loss hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        FocalParams { alpha: 0.25, gamma: 2.0 }
    }
}

/// Effective-number-of-samples weights: `w_c = (1 - beta) / (1 - beta^n_c)`.
///
/// No renormalization. Classes with zero samples are skipped (callers
/// should treat a missing class as a degenerate-fold warning).
pub fn ens_weights(
    counts: &BTreeMap<FlakinessCategory, usize>,
    beta: f64,
) -> CoreResult<ClassWeights> {
    if !(0.0..1.0).contains(&beta) {
        return Err(CoreError::InvalidArgument(alloc::format!("beta must be in [0, 1): {beta}")));
    }
    let mut weights = BTreeMap::new();
    for (&c, &n) in counts {
        if n == 0 {
            continue;
        }
        let w = if beta == 0.0 {
            1.0
        } else {
            (1.0 - beta) / (1.0 - pow(beta, n as f64))
        };
        weights.insert(c, w);
    }
    Ok(ClassWeights { beta, weights })
}

/// Focal loss for the true-class probability: `-alpha (1 - p_t)^gamma ln(p_t)`.
pub fn focal_loss(p_t: f64, params: &FocalParams) -> CoreResult<f64> {
    if !(0.0..=1.0).contains(&p_t) {
        return Err(CoreError::InvalidArgument(alloc::format!("p_t out of [0, 1]: {p_t}")));
    }
    let p = p_t.max(LOG_CLAMP);
    Ok(-params.alpha * pow(1.0 - p_t, params.gamma) * log(p))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|&x| exp(x - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn check_finite(logits: &[f64]) -> CoreResult<()> {
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::NonFinite("logits".into()));
    }
    Ok(())
}

/// Binary focal loss from the two-logit head. `true_class` is 0 (flaky) or
/// 1 (non-flaky) per the head layout chosen by the caller.
pub fn binary_focal_from_logits(
    binary_logits: &[f64; 2],
    true_class: usize,
    params: &FocalParams,
) -> CoreResult<f64> {
    check_finite(binary_logits)?;
    let p = softmax(binary_logits);
    focal_loss(p[true_class], params)
}

/// Gradient of [`binary_focal_from_logits`] with respect to the two logits.
pub fn binary_focal_grad(
    binary_logits: &[f64; 2],
    true_class: usize,
    params: &FocalParams,
) -> CoreResult<[f64; 2]> {
    check_finite(binary_logits)?;
    let p = softmax(binary_logits);
    let pt = p[true_class];
    let pc = pt.max(LOG_CLAMP);
    // dFL/dp_t; the ln argument is clamped, so below the clamp the log term
    // has zero derivative.
    let g = params.gamma;
    let a = params.alpha;
    let mut dl_dpt = a * g * pow(1.0 - pt, g - 1.0) * log(pc);
    if pt > LOG_CLAMP {
        dl_dpt -= a * pow(1.0 - pt, g) / pt;
    }
    let mut grad = [0.0; 2];
    for (j, gj) in grad.iter_mut().enumerate() {
        let indicator = if j == true_class { 1.0 } else { 0.0 };
        *gj = dl_dpt * pt * (indicator - p[j]);
    }
    Ok(grad)
}

/// Weighted categorical cross-entropy: `-w_label ln(softmax(logits)[label])`.
pub fn weighted_categorical_ce(
    cat_logits: &[f64; 6],
    label: FlakinessCategory,
    weights: &ClassWeights,
) -> CoreResult<f64> {
    check_finite(cat_logits)?;
    let w = weights.get(label)?;
    let p = softmax(cat_logits);
    Ok(-w * log(p[label.index()].max(LOG_CLAMP)))
}

/// Gradient of [`weighted_categorical_ce`] with respect to the six logits.
pub fn weighted_categorical_ce_grad(
    cat_logits: &[f64; 6],
    label: FlakinessCategory,
    weights: &ClassWeights,
) -> CoreResult<[f64; 6]> {
    check_finite(cat_logits)?;
    let w = weights.get(label)?;
    let p = softmax(cat_logits);
    let y = label.index();
    let mut grad = [0.0; 6];
    for (j, gj) in grad.iter_mut().enumerate() {
        let indicator = if j == y { 1.0 } else { 0.0 };
        *gj = w * (p[j] - indicator);
    }
    Ok(grad)
}

/// Relative weights of the two loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_bin: f64,
    pub lambda_cat: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { lambda_bin: 1.0, lambda_cat: 1.0 }
    }
}

/// Binary-head class index for a label: 0 = flaky, 1 = non-flaky.
pub fn binary_class(label: FlakinessCategory) -> usize {
    if label.is_flaky() {
        0
    } else {
        1
    }
}

/// Total loss: `lambda_bin * focal(binary) + lambda_cat * weighted CE
/// (categorical)`. ENS weights apply only to the categorical term.
pub fn total_loss(
    logits: &Logits,
    label: FlakinessCategory,
    weights: &ClassWeights,
    params: &FocalParams,
    lw: &LossWeights,
) -> CoreResult<f64> {
    let bin = binary_focal_from_logits(&logits.binary, binary_class(label), params)?;
    let cat = weighted_categorical_ce(&logits.categorical, label, weights)?;
    Ok(lw.lambda_bin * bin + lw.lambda_cat * cat)
}

/// Gradient of [`total_loss`] with respect to both heads' logits.
pub fn total_loss_grad(
    logits: &Logits,
    label: FlakinessCategory,
    weights: &ClassWeights,
    params: &FocalParams,
    lw: &LossWeights,
) -> CoreResult<([f64; 2], [f64; 6])> {
    let mut gb = binary_focal_grad(&logits.binary, binary_class(label), params)?;
    let mut gc = weighted_categorical_ce_grad(&logits.categorical, label, weights)?;
    for g in &mut gb {
        *g *= lw.lambda_bin;
    }
    for g in &mut gc {
        *g *= lw.lambda_cat;
    }
    Ok((gb, gc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(FlakinessCategory, usize)]) -> BTreeMap<FlakinessCategory, usize> {
        pairs.iter().copied().collect()
    }

    #[test]
    fn ens_single_sample_is_one() {
        for beta in [0.0, 0.5, 0.9999] {
            let w = ens_weights(&counts(&[(FlakinessCategory::Time, 1)]), beta).unwrap();
            assert!((w.get(FlakinessCategory::Time).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ens_paper_scale_values() {
        // Direct evaluation of the weight formula at beta = 0.9999.
        let w = ens_weights(
            &counts(&[
                (FlakinessCategory::Concurrency, 37),
                (FlakinessCategory::NonFlaky, 8294),
            ]),
            0.9999,
        )
        .unwrap();
        assert!((w.get(FlakinessCategory::Concurrency).unwrap() - 0.02707570648801996).abs() < 1e-12);
        assert!((w.get(FlakinessCategory::NonFlaky).unwrap() - 1.773970914249936e-4).abs() < 1e-15);
    }

    #[test]
    fn ens_limits() {
        let c = counts(&[(FlakinessCategory::AsyncWait, 100), (FlakinessCategory::NonFlaky, 5)]);
        let lo = ens_weights(&c, 1e-8).unwrap();
        assert!((lo.get(FlakinessCategory::AsyncWait).unwrap() - 1.0).abs() < 1e-4);
        let hi = ens_weights(&c, 1.0 - 1e-8).unwrap();
        assert!((hi.get(FlakinessCategory::AsyncWait).unwrap() - 0.01).abs() < 1e-4);
        assert!((hi.get(FlakinessCategory::NonFlaky).unwrap() - 0.2).abs() < 1e-4);
    }

    #[test]
    fn ens_strictly_decreasing_in_count() {
        let c = counts(&[
            (FlakinessCategory::AsyncWait, 5),
            (FlakinessCategory::Time, 50),
            (FlakinessCategory::NonFlaky, 500),
        ]);
        let w = ens_weights(&c, 0.99).unwrap();
        let a = w.get(FlakinessCategory::AsyncWait).unwrap();
        let t = w.get(FlakinessCategory::Time).unwrap();
        let n = w.get(FlakinessCategory::NonFlaky).unwrap();
        assert!(a > t && t > n);
    }

    #[test]
    fn ens_invalid_beta() {
        let c = counts(&[(FlakinessCategory::Time, 1)]);
        assert!(ens_weights(&c, 1.0).is_err());
        assert!(ens_weights(&c, -0.1).is_err());
    }

    #[test]
    fn focal_fixtures() {
        let p = FocalParams::default();
        assert_eq!(focal_loss(1.0, &p).unwrap(), 0.0);
        assert!((focal_loss(0.5, &p).unwrap() - 0.04332169878499658).abs() < 1e-12);
        assert!((focal_loss(0.1, &p).unwrap() - 0.4662734813312943).abs() < 1e-12);
        assert!(focal_loss(1.5, &p).is_err());
    }

    #[test]
    fn focal_bounded_by_weighted_ce_and_decreasing() {
        let p = FocalParams::default();
        let mut prev = f64::INFINITY;
        for i in 1..100 {
            let pt = i as f64 / 100.0;
            let fl = focal_loss(pt, &p).unwrap();
            assert!(fl <= p.alpha * (-log(pt)) + 1e-15);
            assert!(fl < prev);
            prev = fl;
        }
    }

    #[test]
    fn binary_focal_saturation_and_uniform() {
        let p = FocalParams::default();
        assert!(binary_focal_from_logits(&[20.0, -20.0], 0, &p).unwrap() < 1e-9);
        let uniform = binary_focal_from_logits(&[0.0, 0.0], 1, &p).unwrap();
        assert!((uniform - 0.04332169878499658).abs() < 1e-12);
    }

    #[test]
    fn categorical_fixtures() {
        let w = ClassWeights::uniform();
        let uniform =
            weighted_categorical_ce(&[0.0; 6], FlakinessCategory::Time, &w).unwrap();
        assert!((uniform - 1.791759469228055).abs() < 1e-12);
        let mut sat = [-20.0; 6];
        sat[FlakinessCategory::Time.index()] = 20.0;
        assert!(weighted_categorical_ce(&sat, FlakinessCategory::Time, &w).unwrap() < 1e-9);
        // Linearity in the weight.
        let mut w2 = ClassWeights::uniform();
        *w2.weights.get_mut(&FlakinessCategory::Time).unwrap() = 2.0;
        let doubled = weighted_categorical_ce(&[0.0; 6], FlakinessCategory::Time, &w2).unwrap();
        assert!((doubled - 2.0 * uniform).abs() < 1e-12);
    }

    #[test]
    fn total_loss_fixture_and_lambda() {
        let logits = Logits { binary: [0.0; 2], categorical: [0.0; 6] };
        let w = ClassWeights::uniform();
        let fp = FocalParams::default();
        let total =
            total_loss(&logits, FlakinessCategory::AsyncWait, &w, &fp, &LossWeights::default())
                .unwrap();
        assert!((total - (0.04332169878499658 + 1.791759469228055)).abs() < 1e-12);
        let cat_only = total_loss(
            &logits,
            FlakinessCategory::AsyncWait,
            &w,
            &fp,
            &LossWeights { lambda_bin: 0.0, lambda_cat: 1.0 },
        )
        .unwrap();
        assert!((cat_only - 1.791759469228055).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let fp = FocalParams::default();
        let w = ClassWeights::uniform();
        let h = 1e-5;
        let cases: [[f64; 2]; 3] = [[0.3, -0.7], [2.0, 1.0], [-1.5, 0.5]];
        for logits in cases {
            for true_class in 0..2 {
                let g = binary_focal_grad(&logits, true_class, &fp).unwrap();
                for j in 0..2 {
                    let mut up = logits;
                    let mut dn = logits;
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (binary_focal_from_logits(&up, true_class, &fp).unwrap()
                        - binary_focal_from_logits(&dn, true_class, &fp).unwrap())
                        / (2.0 * h);
                    assert!(
                        (g[j] - fd).abs() <= 1e-6 * fd.abs().max(1e-3),
                        "bin grad mismatch: {} vs {}",
                        g[j],
                        fd
                    );
                }
            }
        }
        let cat = [0.2, -0.4, 1.1, 0.0, -2.0, 0.5];
        let g = weighted_categorical_ce_grad(&cat, FlakinessCategory::Time, &w).unwrap();
        for j in 0..6 {
            let mut up = cat;
            let mut dn = cat;
            up[j] += h;
            dn[j] -= h;
            let fd = (weighted_categorical_ce(&up, FlakinessCategory::Time, &w).unwrap()
                - weighted_categorical_ce(&dn, FlakinessCategory::Time, &w).unwrap())
                / (2.0 * h);
            assert!((g[j] - fd).abs() <= 1e-6 * fd.abs().max(1e-3));
        }
    }
}
