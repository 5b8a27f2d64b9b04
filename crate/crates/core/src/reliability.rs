//! Ground-truth quality: inter-rater reliability and per-rater
//! differential functioning across groups.

use serde::{Deserialize, Serialize};

use crate::data::{AuditTable, GroupPartition};
use crate::error::{AuditError, Result};
use crate::rank::spearman;
use crate::scalar::{sum, Scalar};

/// Targets (rows) by raters (columns), with explicit missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationMatrix<T> {
    values: Vec<Vec<Option<T>>>,
    target_ids: Vec<String>,
    rater_ids: Vec<String>,
}

impl<T: Scalar> AnnotationMatrix<T> {
    pub fn new(
        values: Vec<Vec<Option<T>>>,
        target_ids: Vec<String>,
        rater_ids: Vec<String>,
    ) -> Result<Self> {
        if rater_ids.len() < 2 {
            return Err(AuditError::DegenerateInput(format!(
                "annotation matrix needs at least 2 raters, got {}",
                rater_ids.len()
            )));
        }
        if target_ids.len() != values.len() {
            return Err(AuditError::LengthMismatch(format!(
                "{} target ids for {} rows",
                target_ids.len(),
                values.len()
            )));
        }
        if let Some(row) = values.iter().position(|r| r.len() != rater_ids.len()) {
            return Err(AuditError::LengthMismatch(format!(
                "row {row} has {} cells, expected {}",
                values[row].len(),
                rater_ids.len()
            )));
        }
        Ok(Self { values, target_ids, rater_ids })
    }

    /// Complete grid with generated ids; convenient for tests and callers
    /// that have no missing cells.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        Self::new(
            rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect(),
            (0..rows.len()).map(|i| format!("t{i}")).collect(),
            (0..k).map(|j| format!("r{j}")).collect(),
        )
    }

    pub fn n_targets(&self) -> usize {
        self.values.len()
    }

    pub fn n_raters(&self) -> usize {
        self.rater_ids.len()
    }

    pub fn rater_ids(&self) -> &[String] {
        &self.rater_ids
    }

    pub fn target_ids(&self) -> &[String] {
        &self.target_ids
    }

    pub fn get(&self, target: usize, rater: usize) -> Option<T> {
        self.values[target][rater]
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|r| r.iter().all(Option::is_some))
    }

    /// Listwise deletion: keeps only fully rated targets. Returns the
    /// reduced matrix and the number of targets dropped.
    pub fn complete_rows(&self) -> (Self, usize) {
        let keep: Vec<usize> =
            (0..self.n_targets()).filter(|&i| self.values[i].iter().all(Option::is_some)).collect();
        let dropped = self.n_targets() - keep.len();
        let m = Self {
            values: keep.iter().map(|&i| self.values[i].clone()).collect(),
            target_ids: keep.iter().map(|&i| self.target_ids[i].clone()).collect(),
            rater_ids: self.rater_ids.clone(),
        };
        (m, dropped)
    }
}

impl AnnotationMatrix<f64> {
    /// Rater columns of the table, one target per table row in table order.
    pub fn from_table(table: &AuditTable) -> Result<Self> {
        Self::new(
            table.records.iter().map(|r| r.ratings.clone()).collect(),
            table.records.iter().map(|r| r.subject_id.clone()).collect(),
            table.rater_names.clone(),
        )
    }
}

/// One-way random-effects, average-measures intraclass correlation
/// ICC(1,k) = (MS_between - MS_within) / MS_between.
pub fn icc_1k<T: Scalar>(m: &AnnotationMatrix<T>) -> Result<T> {
    if !m.is_complete() {
        return Err(AuditError::IncompleteMatrix);
    }
    let n = m.n_targets();
    let k = m.n_raters();
    if n < 2 {
        return Err(AuditError::DegenerateInput(format!("ICC needs at least 2 targets, got {n}")));
    }
    let rows: Vec<Vec<T>> =
        m.values.iter().map(|r| r.iter().map(|v| v.unwrap()).collect()).collect();
    let kt = T::from_count(k);
    let row_means: Vec<T> = rows.iter().map(|r| sum(r.iter().copied()) / kt).collect();
    let grand = sum(row_means.iter().copied()) / T::from_count(n);
    let ms_between =
        kt * sum(row_means.iter().map(|&mi| (mi - grand) * (mi - grand))) / T::from_count(n - 1);
    let ss_within = sum(
        rows.iter()
            .zip(&row_means)
            .flat_map(|(r, &mi)| r.iter().map(move |&x| (x - mi) * (x - mi))),
    );
    let ms_within = ss_within / T::from_count(n * (k - 1));
    if !(ms_between > T::zero()) {
        return Err(AuditError::NoBetweenTargetVariance);
    }
    Ok((ms_between - ms_within) / ms_between)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRestRecord<T> {
    pub rater_id: String,
    pub r_a: T,
    pub r_b: T,
    pub diff: T,
    pub flagged: bool,
}

/// Item-rest pairs for one rater over the given targets: the rater's score
/// and the mean of the other raters present on that target.
fn item_rest_pairs<T: Scalar>(m: &AnnotationMatrix<T>, rater: usize, idx: &[usize]) -> (Vec<T>, Vec<T>) {
    let mut item = Vec::new();
    let mut rest = Vec::new();
    for &t in idx {
        let Some(x) = m.values[t][rater] else { continue };
        let others: Vec<T> = m.values[t]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != rater)
            .filter_map(|(_, v)| *v)
            .collect();
        if others.is_empty() {
            continue;
        }
        item.push(x);
        rest.push(sum(others.iter().copied()) / T::from_count(others.len()));
    }
    (item, rest)
}

/// Per-group item-rest Spearman correlation for a single rater.
pub fn item_rest_for_rater<T: Scalar>(
    m: &AnnotationMatrix<T>,
    part: &GroupPartition,
    rater: usize,
    threshold: T,
) -> Result<ItemRestRecord<T>> {
    let rater_id = &m.rater_ids[rater];
    if let Some(&bad) = part.idx_a.iter().chain(&part.idx_b).find(|&&i| i >= m.n_targets()) {
        return Err(AuditError::LengthMismatch(format!(
            "partition row {bad} outside annotation matrix of {} targets",
            m.n_targets()
        )));
    }
    let group_rho = |idx: &[usize], label: &str| -> Result<T> {
        let (item, rest) = item_rest_pairs(m, rater, idx);
        spearman(&item, &rest).map_err(|e| {
            AuditError::DegenerateInput(format!("rater `{rater_id}`, group `{label}`: {e}"))
        })
    };
    let r_a = group_rho(&part.idx_a, &part.group_a_label)?;
    let r_b = group_rho(&part.idx_b, &part.group_b_label)?;
    let diff = r_a - r_b;
    Ok(ItemRestRecord { rater_id: rater_id.clone(), r_a, r_b, diff, flagged: diff.abs() > threshold })
}

/// Item-rest (rater versus mean of remaining raters) Spearman correlation
/// per group for every rater, flagged when the group gap exceeds
/// `threshold`.
pub fn item_total_dif<T: Scalar>(
    m: &AnnotationMatrix<T>,
    part: &GroupPartition,
    threshold: T,
) -> Result<Vec<ItemRestRecord<T>>> {
    (0..m.n_raters()).map(|j| item_rest_for_rater(m, part, j, threshold)).collect()
}
