//! Rank-based accuracy statistics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{gather, AuditTable, GroupPartition};
use crate::error::{AuditError, Result};
use crate::scalar::{sum, Scalar};

/// Groups must exceed this size before a correlation-difference statistic
/// is reported.
pub const MIN_N_FOR_Z: usize = 10;

/// Variance inflation applied to Fisher's z for Spearman coefficients.
const SPEARMAN_Z_VARIANCE: f64 = 1.06;

/// Largest |rho| fed to `atanh`.
const ATANH_CAP: f64 = 1.0 - 1e-12;

/// Average ranks (1-based); tied values share the mean of the ranks they
/// span.
pub fn fractional_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && x[order[end]] == x[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = T::from_count(start + 1 + end) / T::lit(2.0);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Pearson product-moment correlation.
pub fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(AuditError::LengthMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(AuditError::DegenerateInput(format!("need at least 2 pairs, got {}", x.len())));
    }
    let n = T::from_count(x.len());
    let mx = sum(x.iter().copied()) / n;
    let my = sum(y.iter().copied()) / n;
    let sxy = sum(x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)));
    let sxx = sum(x.iter().map(|&a| (a - mx) * (a - mx)));
    let syy = sum(y.iter().map(|&b| (b - my) * (b - my)));
    if sxx <= T::zero() || syy <= T::zero() {
        return Err(AuditError::DegenerateInput("constant sequence".into()));
    }
    let r = sxy / (sxx * syy).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(AuditError::LengthMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(AuditError::DegenerateInput(format!("need n >= 3, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AuditError::DegenerateInput("non-finite value".into()));
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

/// Fisher r-to-z statistic for the difference of two independent
/// Spearman coefficients, using variance `1.06 / (n - 3)` per group.
pub fn fisher_z_difference<T: Scalar>(rho_a: T, n_a: usize, rho_b: T, n_b: usize) -> Option<T> {
    if n_a <= 3 || n_b <= 3 {
        return None;
    }
    let cap = T::lit(ATANH_CAP);
    let clamp = |r: T| r.max(-cap).min(cap);
    let k = T::lit(SPEARMAN_Z_VARIANCE);
    let se = (k / T::from_count(n_a - 3) + k / T::from_count(n_b - 3)).sqrt();
    Some((clamp(rho_a).atanh() - clamp(rho_b).atanh()) / se)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport<T> {
    pub rho_all: T,
    pub rho_a: T,
    pub rho_b: T,
    pub diff_a_minus_b: T,
    pub z_stat: Option<T>,
    pub n_a: usize,
    pub n_b: usize,
}

impl<T: Scalar> CorrelationReport<T> {
    pub fn from_parts(rho_all: T, rho_a: T, n_a: usize, rho_b: T, n_b: usize) -> Self {
        let z_stat = if n_a > MIN_N_FOR_Z && n_b > MIN_N_FOR_Z {
            fisher_z_difference(rho_a, n_a, rho_b, n_b)
        } else {
            None
        };
        Self { rho_all, rho_a, rho_b, diff_a_minus_b: rho_a - rho_b, z_stat, n_a, n_b }
    }
}

/// Spearman accuracy of predictions against ground truth, overall and
/// within each group of the partition.
pub fn correlational_accuracy(
    table: &AuditTable,
    part: &GroupPartition,
) -> Result<CorrelationReport<f64>> {
    let truth = table.y_true();
    let pred = table.y_pred();
    let labelled = |label: &str, e: AuditError| match e {
        AuditError::DegenerateInput(m) => AuditError::DegenerateInput(format!("group `{label}`: {m}")),
        other => other,
    };
    let rho_a = spearman(&gather(&truth, &part.idx_a), &gather(&pred, &part.idx_a))
        .map_err(|e| labelled(&part.group_a_label, e))?;
    let rho_b = spearman(&gather(&truth, &part.idx_b), &gather(&pred, &part.idx_b))
        .map_err(|e| labelled(&part.group_b_label, e))?;
    let all = part.included();
    let rho_all = spearman(&gather(&truth, &all), &gather(&pred, &all))?;
    Ok(CorrelationReport::from_parts(rho_all, rho_a, part.n_a(), rho_b, part.n_b()))
}
