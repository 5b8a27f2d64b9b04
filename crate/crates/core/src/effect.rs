//! Standardized group-mean differences and the range diagnostic.

use serde::{Deserialize, Serialize};

use crate::data::{gather, AuditTable, GroupPartition};
use crate::error::{AuditError, Result};
use crate::scalar::{mean, sample_variance, Scalar};

fn pooled_variance<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (na, nb) = (a.len(), b.len());
    (T::from_count(na - 1) * sample_variance(a) + T::from_count(nb - 1) * sample_variance(b))
        / T::from_count(na + nb - 2)
}

/// Cohen's d of group A over group B: `(mean_a - mean_b) / s` with `s` the
/// pooled standard deviation built from `n - 1` sample variances.
pub fn cohens_d<T: Scalar>(values_a: &[T], values_b: &[T]) -> Result<T> {
    if values_a.len() < 2 || values_b.len() < 2 {
        return Err(AuditError::TooFewSamples(format!(
            "each group needs at least 2 values, got {} and {}",
            values_a.len(),
            values_b.len()
        )));
    }
    let var = pooled_variance(values_a, values_b);
    if !(var > T::zero()) {
        return Err(AuditError::ZeroPooledVariance("both groups are constant".into()));
    }
    Ok((mean(values_a) - mean(values_b)) / var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizeReport<T> {
    pub d_true: T,
    pub d_pred: T,
    pub diff_true_minus_pred: T,
    pub mean_a_true: T,
    pub mean_b_true: T,
    pub mean_a_pred: T,
    pub mean_b_pred: T,
    pub pooled_sd_true: T,
    pub pooled_sd_pred: T,
    pub sd_ratio_pred_over_true: T,
}

impl<T: Scalar> EffectSizeReport<T> {
    pub fn from_groups(true_a: &[T], true_b: &[T], pred_a: &[T], pred_b: &[T]) -> Result<Self> {
        let label = |column: &str, e: AuditError| match e {
            AuditError::TooFewSamples(m) => AuditError::TooFewSamples(format!("{column}: {m}")),
            AuditError::ZeroPooledVariance(m) => {
                AuditError::ZeroPooledVariance(format!("{column}: {m}"))
            }
            other => other,
        };
        let d_true = cohens_d(true_a, true_b).map_err(|e| label("ground truth", e))?;
        let d_pred = cohens_d(pred_a, pred_b).map_err(|e| label("predictions", e))?;
        let pooled_sd_true = pooled_variance(true_a, true_b).sqrt();
        let pooled_sd_pred = pooled_variance(pred_a, pred_b).sqrt();
        Ok(Self {
            d_true,
            d_pred,
            diff_true_minus_pred: d_true - d_pred,
            mean_a_true: mean(true_a),
            mean_b_true: mean(true_b),
            mean_a_pred: mean(pred_a),
            mean_b_pred: mean(pred_b),
            pooled_sd_true,
            pooled_sd_pred,
            sd_ratio_pred_over_true: pooled_sd_pred / pooled_sd_true,
        })
    }
}

/// Cohen's d on ground truth and on predictions, and their difference.
pub fn effect_size_difference(
    table: &AuditTable,
    part: &GroupPartition,
) -> Result<EffectSizeReport<f64>> {
    let truth = table.y_true();
    let pred = table.y_pred();
    EffectSizeReport::from_groups(
        &gather(&truth, &part.idx_a),
        &gather(&truth, &part.idx_b),
        &gather(&pred, &part.idx_a),
        &gather(&pred, &part.idx_b),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeRestriction<T> {
    pub min_true: T,
    pub max_true: T,
    pub min_pred: T,
    pub max_pred: T,
    /// Sample SD of predictions over sample SD of ground truth.
    pub sd_ratio: T,
}

pub fn range_restriction_of<T: Scalar>(truth: &[T], pred: &[T]) -> Result<RangeRestriction<T>> {
    if truth.len() != pred.len() {
        return Err(AuditError::LengthMismatch(format!("{} vs {}", truth.len(), pred.len())));
    }
    if truth.len() < 2 {
        return Err(AuditError::DegenerateInput("range check needs at least 2 rows".into()));
    }
    let var_true = sample_variance(truth);
    if !(var_true > T::zero()) {
        return Err(AuditError::DegenerateInput("ground truth is constant".into()));
    }
    let extrema = |v: &[T]| {
        v.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &x| (lo.min(x), hi.max(x)))
    };
    let (min_true, max_true) = extrema(truth);
    let (min_pred, max_pred) = extrema(pred);
    Ok(RangeRestriction {
        min_true,
        max_true,
        min_pred,
        max_pred,
        sd_ratio: (sample_variance(pred) / var_true).sqrt(),
    })
}

/// Extrema of both score columns and the prediction/truth SD ratio over
/// all rows of the table.
pub fn range_restriction(table: &AuditTable) -> Result<RangeRestriction<f64>> {
    range_restriction_of(&table.y_true(), &table.y_pred())
}
