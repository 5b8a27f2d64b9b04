//! Decision-stage fairness: selection rules, adverse impact and the
//! four-fifths rule, selection-rate sweeps, conditional demographic
//! parity and the single-threshold check.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classification::binarize;
use crate::data::{AuditTable, GroupPartition};
use crate::error::{AuditError, Result};
use crate::report::{Flag, MetricResult, Stage};
use crate::scalar::Scalar;

/// Adverse impact ratios strictly below this violate the four-fifths rule.
pub const FOUR_FIFTHS: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum DecisionMode {
    /// Select the best `floor(rate * n)` subjects.
    TopKRate(f64),
    /// Select every subject scoring at or beyond the threshold.
    Threshold(f64),
}

/// Binary decision rule. Ties under top-k are broken by descending score,
/// then ascending subject id; k is rounded down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionSpec {
    pub mode: DecisionMode,
}

pub const TIE_BREAK: &str = "score_desc_then_subject_id_asc";
pub const K_ROUNDING: &str = "floor";

impl DecisionSpec {
    pub fn top_k_rate(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(AuditError::InvalidRate(rate));
        }
        Ok(Self { mode: DecisionMode::TopKRate(rate) })
    }

    pub fn threshold(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(AuditError::Config(format!("threshold must be finite, got {value}")));
        }
        Ok(Self { mode: DecisionMode::Threshold(value) })
    }

    /// Number selected out of `n` under top-k mode.
    pub fn k_for(&self, n: usize) -> Option<usize> {
        match self.mode {
            DecisionMode::TopKRate(rate) => Some((rate * n as f64).floor() as usize),
            DecisionMode::Threshold(_) => None,
        }
    }
}

impl fmt::Display for DecisionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            DecisionMode::TopKRate(r) => write!(f, "top_k:{r}"),
            DecisionMode::Threshold(t) => write!(f, "threshold:{t}"),
        }
    }
}

impl FromStr for DecisionSpec {
    type Err = AuditError;

    /// Parses `top_k:<rate>` or `threshold:<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| AuditError::Config(format!("decision rule `{s}` lacks `:`")))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| AuditError::Config(format!("decision rule `{s}`: bad number")))?;
        match kind.trim() {
            "top_k" => Self::top_k_rate(v),
            "threshold" => Self::threshold(v),
            other => Err(AuditError::Config(format!("unknown decision mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreColumn {
    Truth,
    Pred,
}

impl ScoreColumn {
    pub fn name(self) -> &'static str {
        match self {
            ScoreColumn::Truth => "truth",
            ScoreColumn::Pred => "prediction",
        }
    }
}

/// Applies `rule` to `column` over the given table rows (the selection
/// population) and returns decisions aligned with `rows`. Scores are
/// oriented so that "better" is selected when the scale is lower-is-better.
pub fn decide(
    table: &AuditTable,
    rows: &[usize],
    column: ScoreColumn,
    rule: &DecisionSpec,
) -> Result<Vec<bool>> {
    let sign = if table.scale.higher_is_better { 1.0 } else { -1.0 };
    let scores: Vec<f64> = rows
        .iter()
        .map(|&i| {
            let r = &table.records[i];
            sign * match column {
                ScoreColumn::Truth => r.y_true,
                ScoreColumn::Pred => r.y_pred,
            }
        })
        .collect();
    let ids: Vec<&str> = rows.iter().map(|&i| table.records[i].subject_id.as_str()).collect();
    let oriented = match rule.mode {
        DecisionMode::Threshold(t) => DecisionSpec { mode: DecisionMode::Threshold(sign * t) },
        _ => *rule,
    };
    binarize(&scores, &ids, &oriented)
}

/// Decisions for every table row; rows outside the partition are `false`
/// and the selection population is the partition.
pub fn decide_partitioned(
    table: &AuditTable,
    part: &GroupPartition,
    column: ScoreColumn,
    rule: &DecisionSpec,
) -> Result<Vec<bool>> {
    let rows = part.included();
    let d = decide(table, &rows, column, rule)?;
    let mut full = vec![false; table.len()];
    for (&i, v) in rows.iter().zip(d) {
        full[i] = v;
    }
    Ok(full)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdverseImpactResult<T> {
    pub sr_a: T,
    pub sr_b: T,
    pub ai_ratio: T,
    pub four_fifths_violation: bool,
    pub selected_a: usize,
    pub selected_b: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub note: Option<String>,
}

impl<T: Scalar> AdverseImpactResult<T> {
    /// Builds the result from selection counts. The ratio is formed from
    /// integer cross products so that exactly four fifths lands on the
    /// compliant side.
    pub fn from_counts(selected_a: usize, n_a: usize, selected_b: usize, n_b: usize) -> Result<Self> {
        if n_a == 0 || n_b == 0 {
            return Err(AuditError::TooFewSamples("adverse impact needs both groups".into()));
        }
        if selected_a > n_a || selected_b > n_b {
            return Err(AuditError::LengthMismatch("more selections than group members".into()));
        }
        if selected_a == 0 && selected_b == 0 {
            return Err(AuditError::EmptySelection);
        }
        let cross_a = selected_a as u128 * n_b as u128;
        let cross_b = selected_b as u128 * n_a as u128;
        let (lo, hi) = (cross_a.min(cross_b), cross_a.max(cross_b));
        let ai_ratio = T::from_u128(lo).unwrap() / T::from_u128(hi).unwrap();
        let note = match (selected_a, selected_b) {
            (0, _) => Some("zero selections in group A".to_string()),
            (_, 0) => Some("zero selections in group B".to_string()),
            _ => None,
        };
        Ok(Self {
            sr_a: T::from_count(selected_a) / T::from_count(n_a),
            sr_b: T::from_count(selected_b) / T::from_count(n_b),
            ai_ratio,
            four_fifths_violation: 5 * lo < 4 * hi,
            selected_a,
            selected_b,
            n_a,
            n_b,
            note,
        })
    }
}

/// Smaller quotient of two selection ratios; `None` when both are zero.
pub fn ai_ratio_from_rates<T: Scalar>(sr_a: T, sr_b: T) -> Option<T> {
    if sr_a <= T::zero() && sr_b <= T::zero() {
        return None;
    }
    if sr_a <= T::zero() || sr_b <= T::zero() {
        return Some(T::zero());
    }
    Some((sr_a / sr_b).min(sr_b / sr_a))
}

pub fn violates_four_fifths<T: Scalar>(ai_ratio: T) -> bool {
    ai_ratio < T::lit(FOUR_FIFTHS)
}

/// Adverse impact of `rule` applied to one score column, with selection
/// ratios taken within each group and `k` computed on the partitioned
/// population.
pub fn adverse_impact(
    table: &AuditTable,
    part: &GroupPartition,
    rule: &DecisionSpec,
    column: ScoreColumn,
) -> Result<AdverseImpactResult<f64>> {
    if let Some(0) = rule.k_for(part.n_a() + part.n_b()) {
        return Err(AuditError::InvalidK { k: 0, n: part.n_a() + part.n_b() });
    }
    let d = decide_partitioned(table, part, column, rule)?;
    let count = |idx: &[usize]| idx.iter().filter(|&&i| d[i]).count();
    AdverseImpactResult::from_counts(count(&part.idx_a), part.n_a(), count(&part.idx_b), part.n_b())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum SweepOutcome {
    Computed(AdverseImpactResult<f64>),
    Undefined { reason: String },
}

impl SweepOutcome {
    pub fn ai_ratio(&self) -> Option<f64> {
        match self {
            SweepOutcome::Computed(r) => Some(r.ai_ratio),
            SweepOutcome::Undefined { .. } => None,
        }
    }

    fn from_result(r: Result<AdverseImpactResult<f64>>) -> Result<Self> {
        match r {
            Ok(v) => Ok(SweepOutcome::Computed(v)),
            Err(e @ (AuditError::EmptySelection | AuditError::InvalidK { .. })) => {
                Ok(SweepOutcome::Undefined { reason: e.to_string() })
            }
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rate: f64,
    pub k: usize,
    pub predicted: SweepOutcome,
    pub truth: SweepOutcome,
}

/// Adverse impact on predictions and on ground truth for each selection
/// rate, in input order.
pub fn ai_sweep(table: &AuditTable, part: &GroupPartition, rates: &[f64]) -> Result<Vec<SweepPoint>> {
    let n = part.n_a() + part.n_b();
    rates
        .iter()
        .map(|&rate| {
            let rule = DecisionSpec::top_k_rate(rate)?;
            Ok(SweepPoint {
                rate,
                k: rule.k_for(n).unwrap_or(0),
                predicted: SweepOutcome::from_result(adverse_impact(table, part, &rule, ScoreColumn::Pred))?,
                truth: SweepOutcome::from_result(adverse_impact(table, part, &rule, ScoreColumn::Truth))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumGap {
    pub stratum: String,
    pub n_a: usize,
    pub n_b: usize,
    pub sr_a: f64,
    pub sr_b: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalParity {
    pub strata_column: String,
    pub strata: Vec<StratumGap>,
    /// Strata lacking members of one group; left out of the maximum.
    pub sparse_strata: Vec<String>,
    /// Partitioned rows with no value in the strata column.
    pub missing_rows: usize,
    pub max_gap: Option<f64>,
}

/// Selection-rate gaps between groups within each stratum of a
/// categorical feature column, for decisions on predictions.
pub fn conditional_demographic_parity(
    table: &AuditTable,
    part: &GroupPartition,
    rule: &DecisionSpec,
    strata_column: &str,
) -> Result<ConditionalParity> {
    let col = table
        .feature_index(strata_column)
        .ok_or_else(|| AuditError::UnknownColumn(strata_column.to_string()))?;
    let d = decide_partitioned(table, part, ScoreColumn::Pred, rule)?;
    // stratum value -> [(n, selected) for A, for B]
    let mut cells: Vec<(f64, [(usize, usize); 2])> = Vec::new();
    let mut missing_rows = 0;
    for (is_a, idx) in [(true, &part.idx_a), (false, &part.idx_b)] {
        for &i in idx {
            let Some(v) = table.records[i].features[col] else {
                missing_rows += 1;
                continue;
            };
            let pos = match cells.iter().position(|(s, _)| s.total_cmp(&v) == Ordering::Equal) {
                Some(p) => p,
                None => {
                    cells.push((v, [(0, 0); 2]));
                    cells.len() - 1
                }
            };
            let cell = &mut cells[pos].1[usize::from(!is_a)];
            cell.0 += 1;
            cell.1 += usize::from(d[i]);
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut strata = Vec::new();
    let mut sparse_strata = Vec::new();
    for (v, [(n_a, s_a), (n_b, s_b)]) in cells {
        if n_a == 0 || n_b == 0 {
            sparse_strata.push(v.to_string());
            continue;
        }
        let sr_a = s_a as f64 / n_a as f64;
        let sr_b = s_b as f64 / n_b as f64;
        strata.push(StratumGap { stratum: v.to_string(), n_a, n_b, sr_a, sr_b, gap: (sr_a - sr_b).abs() });
    }
    let max_gap = strata.iter().map(|s| s.gap).fold(None, |m: Option<f64>, g| Some(m.map_or(g, |m| m.max(g))));
    Ok(ConditionalParity { strata_column: strata_column.to_string(), strata, sparse_strata, missing_rows, max_gap })
}

/// Satisfied when no group is given its own decision rule. Overrides equal
/// to the global rule are accepted and reported as redundant.
pub fn single_threshold_check(
    rule: &DecisionSpec,
    per_group_overrides: &BTreeMap<String, DecisionSpec>,
) -> MetricResult {
    let mut result = MetricResult::new("single_threshold", Stage::Decision);
    if per_group_overrides.is_empty() {
        result.flag = Flag::Ok;
        result.rationale = format!("one rule ({rule}) applied to everyone");
        return result;
    }
    let differing: Vec<String> = per_group_overrides
        .iter()
        .filter(|(_, r)| *r != rule)
        .map(|(g, r)| format!("{g}={r}"))
        .collect();
    if differing.is_empty() {
        result.flag = Flag::Ok;
        result.rationale = format!("one rule ({rule}) applied to everyone");
        result.notes.push("redundant overrides".to_string());
    } else {
        result.flag = Flag::Suspect;
        result.rationale = format!(
            "group-specific rules differ from the global rule ({rule}): {}",
            differing.join(", ")
        );
    }
    result.values.insert("overrides".into(), differing.len() as f64);
    result
}
