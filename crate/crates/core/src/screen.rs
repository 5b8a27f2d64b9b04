//! Feature-stage checks.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::classification::auc;
use crate::data::{AuditTable, GroupPartition};
use crate::error::Result;
use crate::report::{Flag, MetricResult, Stage};
use crate::scalar::Scalar;

/// Fairness through unawareness: no forbidden column may be an input
/// feature. Matching is by exact column name, with or without the feature
/// prefix.
pub fn unawareness_check(table: &AuditTable, forbidden_columns: &[String]) -> MetricResult {
    let mut res = MetricResult::new("fairness_through_unawareness", Stage::Feature)
        .with_construct(table.construct_name());
    if forbidden_columns.is_empty() {
        res.rationale = "no forbidden columns declared".into();
        res.notes.push("no forbidden columns declared".into());
        return res;
    }
    let prefix = &table.roles.feature_prefix;
    let used: Vec<&String> = forbidden_columns
        .iter()
        .filter(|f| {
            table
                .feature_names
                .iter()
                .any(|name| name == *f || name.strip_prefix(prefix.as_str()) == Some(f.as_str()))
        })
        .collect();
    res.values.insert("forbidden_in_features".into(), used.len() as f64);
    if used.is_empty() {
        res.rationale = format!("none of [{}] used as features", forbidden_columns.join(", "));
    } else {
        res.flag = Flag::Suspect;
        res.rationale = format!(
            "forbidden columns used as features: {}",
            used.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    res
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport<T> {
    pub feature_name: String,
    /// `max(auc, 1 - auc)` of the feature discriminating group B from A.
    pub separability_auc: T,
    /// Label of the group with the higher feature values, if any.
    pub direction: Option<String>,
    pub flagged: bool,
    pub note: Option<String>,
}

/// Folded two-sample AUC of one feature's values in group B versus A.
/// Returns `(raw, folded)`; constant input yields 0.5 for both.
pub fn separability<T: Scalar>(values_a: &[T], values_b: &[T]) -> Result<(T, T)> {
    let mut scores = Vec::with_capacity(values_a.len() + values_b.len());
    scores.extend_from_slice(values_a);
    scores.extend_from_slice(values_b);
    let labels: Vec<bool> = (0..scores.len()).map(|i| i >= values_a.len()).collect();
    let raw = auc(&scores, &labels)?;
    if raw >= T::lit(0.5) {
        return Ok((raw, raw));
    }
    // ranking the negated scores keeps the fold exact under order reversal
    let flipped: Vec<T> = scores.iter().map(|&s| -s).collect();
    Ok((raw, auc(&flipped, &labels)?))
}

/// Screens every feature column for group information, sorted by
/// separability (descending) then name.
pub fn leakage_screen(
    table: &AuditTable,
    part: &GroupPartition,
    flag_threshold: f64,
) -> Result<Vec<LeakageReport<f64>>> {
    let mut out = Vec::with_capacity(table.feature_names.len());
    for (j, name) in table.feature_names.iter().enumerate() {
        let pick = |idx: &[usize]| -> Vec<f64> {
            idx.iter().filter_map(|&i| table.records[i].features[j]).collect()
        };
        let (a, b) = (pick(&part.idx_a), pick(&part.idx_b));
        let distinct = a.iter().chain(&b).any(|v| Some(v) != a.first().or(b.first()));
        let report = if a.is_empty() || b.is_empty() {
            LeakageReport {
                feature_name: name.clone(),
                separability_auc: 0.5,
                direction: None,
                flagged: false,
                note: Some("no values in one group".into()),
            }
        } else if !distinct {
            LeakageReport {
                feature_name: name.clone(),
                separability_auc: 0.5,
                direction: None,
                flagged: false,
                note: Some("constant feature".into()),
            }
        } else {
            let (raw, folded) = separability(&a, &b)?;
            let direction = match raw.partial_cmp(&0.5) {
                Some(Ordering::Greater) => Some(part.group_b_label.clone()),
                Some(Ordering::Less) => Some(part.group_a_label.clone()),
                _ => None,
            };
            LeakageReport {
                feature_name: name.clone(),
                separability_auc: folded,
                direction,
                flagged: folded >= flag_threshold,
                note: None,
            }
        };
        out.push(report);
    }
    out.sort_by(|x, y| {
        y.separability_auc
            .total_cmp(&x.separability_auc)
            .then_with(|| x.feature_name.cmp(&y.feature_name))
    });
    Ok(out)
}

impl LeakageReport<f64> {
    pub fn to_metric(&self, construct: &str, threshold: f64) -> MetricResult {
        let mut r = MetricResult::new(format!("feature_leakage:{}", self.feature_name), Stage::Feature)
            .with_construct(construct)
            .value("separability_auc", self.separability_auc);
        r.threshold_used = Some(threshold);
        r.flag = if self.flagged { Flag::Suspect } else { Flag::Ok };
        r.rationale = match (&self.direction, self.flagged) {
            (Some(g), true) => format!(
                "feature separates groups (AUC {:.4} >= {threshold}); higher in `{g}`",
                self.separability_auc
            ),
            _ => format!("separability {:.4} below {threshold}", self.separability_auc),
        };
        if let Some(n) = &self.note {
            r.notes.push(n.clone());
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnRoles, ScoreScale, SubjectRecord};
    use proptest::prelude::*;

    fn table(groups: &[&str], features: &[(&str, Vec<f64>)]) -> AuditTable {
        let records = groups
            .iter()
            .enumerate()
            .map(|(i, g)| SubjectRecord {
                subject_id: format!("s{i}"),
                group: g.to_string(),
                y_true: 4.0,
                y_pred: 4.0,
                ratings: vec![],
                features: features.iter().map(|(_, v)| Some(v[i])).collect(),
            })
            .collect();
        AuditTable::new(
            records,
            ScoreScale::default(),
            ColumnRoles::default(),
            vec![],
            features.iter().map(|(n, _)| n.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn unawareness_examples() {
        let t = table(&["a", "b"], &[("f_pitch", vec![1.0, 2.0])]);
        assert_eq!(unawareness_check(&t, &["group".into()]).flag, Flag::Ok);
        let t = table(&["a", "b"], &[("f_pitch", vec![1.0, 2.0]), ("group", vec![0.0, 1.0])]);
        let r = unawareness_check(&t, &["group".into()]);
        assert_eq!(r.flag, Flag::Suspect);
        assert!(r.rationale.contains("group"));
        let t = table(&["a", "b"], &[("f_group", vec![0.0, 1.0])]);
        assert_eq!(unawareness_check(&t, &["group".into()]).flag, Flag::Suspect);
        let r = unawareness_check(&t, &[]);
        assert_eq!(r.flag, Flag::Ok);
        assert_eq!(r.notes, vec!["no forbidden columns declared".to_string()]);
    }

    #[test]
    fn separability_examples() {
        let (raw, folded) = separability(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert_eq!((raw, folded), (0.75, 0.75));
        let (raw, folded) = separability(&[2.0, 4.0], &[1.0, 3.0]).unwrap();
        assert_eq!((raw, folded), (0.25, 0.75));
    }

    #[test]
    fn screen_examples() {
        let groups = ["a", "a", "a", "b", "b", "b"];
        let t = table(
            &groups,
            &[
                ("f_const", vec![1.0; 6]),
                ("f_split", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
                ("f_same", vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]),
            ],
        );
        let p = crate::data::partition(&t, "a", "b").unwrap();
        let r = leakage_screen(&t, &p, 0.65).unwrap();
        let names: Vec<&str> = r.iter().map(|x| x.feature_name.as_str()).collect();
        assert_eq!(names, vec!["f_split", "f_const", "f_same"]);
        assert_eq!((r[0].separability_auc, r[0].flagged), (1.0, true));
        assert_eq!(r[0].direction.as_deref(), Some("b"));
        assert_eq!((r[1].separability_auc, r[1].flagged), (0.5, false));
        assert_eq!(r[1].note.as_deref(), Some("constant feature"));
        assert_eq!((r[2].separability_auc, r[2].flagged), (0.5, false));
    }

    proptest! {
        #[test]
        fn folded_invariant_to_swap_and_monotone_maps(
            a in prop::collection::vec(-5i32..5, 1..15),
            b in prop::collection::vec(-5i32..5, 1..15),
            k in 0.1f64..3.0,
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let (_, f) = separability(&a, &b).unwrap();
            prop_assert_eq!(f, separability(&b, &a).unwrap().1);
            let m = |v: &[f64]| v.iter().map(|x| (k * x).exp()).collect::<Vec<_>>();
            prop_assert_eq!(f, separability(&m(&a), &m(&b)).unwrap().1);
            prop_assert!((0.5..=1.0).contains(&f));
        }
    }
}
