//! Binary-outcome group metrics: confusion matrices, the rate-equality
//! family and AUC parity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{gather, AuditTable, GroupPartition};
use crate::decision::{decide_partitioned, DecisionMode, DecisionSpec, ScoreColumn};
use crate::error::{AuditError, Result};
use crate::rank::fractional_ranks;
use crate::report::{Flag, FlagThresholds, MetricResult, Stage};
use crate::scalar::{sum, Scalar};

/// Selects exactly `k` subjects: highest score first, ties by ascending id.
pub fn top_k<T: Scalar, S: AsRef<str>>(scores: &[T], ids: &[S], k: i64) -> Result<Vec<bool>> {
    let n = scores.len();
    if ids.len() != n {
        return Err(AuditError::LengthMismatch(format!("{n} scores, {} ids", ids.len())));
    }
    if k < 0 || k as usize > n {
        return Err(AuditError::InvalidK { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[i].as_ref().cmp(ids[j].as_ref()))
    });
    let mut out = vec![false; n];
    for &i in &order[..k as usize] {
        out[i] = true;
    }
    Ok(out)
}

/// Applies a decision rule to scores where higher is better.
pub fn binarize<T: Scalar, S: AsRef<str>>(scores: &[T], ids: &[S], rule: &DecisionSpec) -> Result<Vec<bool>> {
    match rule.mode {
        DecisionMode::TopKRate(_) => {
            let k = rule.k_for(scores.len()).unwrap_or(0);
            top_k(scores, ids, k as i64)
        }
        DecisionMode::Threshold(t) => {
            if ids.len() != scores.len() {
                return Err(AuditError::LengthMismatch(format!("{} scores, {} ids", scores.len(), ids.len())));
            }
            let t = T::lit(t);
            Ok(scores.iter().map(|&s| s >= t).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn record(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn rates<T: Scalar>(&self) -> GroupRates<T> {
        let ratio = |num: u64, den: u64| {
            (den > 0).then(|| T::from_u64(num).unwrap() / T::from_u64(den).unwrap())
        };
        GroupRates {
            tpr: ratio(self.tp, self.tp + self.fn_),
            fpr: ratio(self.fp, self.fp + self.tn),
            ppv: ratio(self.tp, self.tp + self.fp),
            accuracy: ratio(self.tp + self.tn, self.total()),
            positive_rate: ratio(self.tp + self.fp, self.total()),
            fn_fp_ratio: ratio(self.fn_, self.fp),
        }
    }
}

/// Rates derived from a confusion matrix; `None` where the denominator is
/// zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupRates<T> {
    pub tpr: Option<T>,
    pub fpr: Option<T>,
    pub ppv: Option<T>,
    pub accuracy: Option<T>,
    pub positive_rate: Option<T>,
    pub fn_fp_ratio: Option<T>,
}

/// Per-group tallies of predicted versus true decisions, both indexed by
/// table row.
pub fn confusion_by_group(
    decisions_pred: &[bool],
    decisions_true: &[bool],
    part: &GroupPartition,
) -> Result<(ConfusionMatrix, ConfusionMatrix)> {
    if decisions_pred.len() != decisions_true.len() {
        return Err(AuditError::LengthMismatch(format!(
            "{} predicted vs {} true decisions",
            decisions_pred.len(),
            decisions_true.len()
        )));
    }
    let tally = |idx: &[usize]| -> Result<ConfusionMatrix> {
        let mut cm = ConfusionMatrix::default();
        for &i in idx {
            if i >= decisions_pred.len() {
                return Err(AuditError::LengthMismatch(format!("row {i} beyond decisions")));
            }
            cm.record(decisions_pred[i], decisions_true[i]);
        }
        Ok(cm)
    };
    Ok((tally(&part.idx_a)?, tally(&part.idx_b)?))
}

/// Confusion matrices for `rule` applied to predictions, with the same
/// rule applied to ground truth as the reference labels.
pub fn confusion_for_rule(
    table: &AuditTable,
    part: &GroupPartition,
    rule: &DecisionSpec,
) -> Result<(ConfusionMatrix, ConfusionMatrix)> {
    let pred = decide_partitioned(table, part, ScoreColumn::Pred, rule)?;
    let truth = decide_partitioned(table, part, ScoreColumn::Truth, rule)?;
    confusion_by_group(&pred, &truth, part)
}

/// (value name, getter, reason when missing)
type RateGetter = (&'static str, fn(&GroupRates<f64>) -> Option<f64>, &'static str);

struct Gap {
    metric: &'static str,
    rates: &'static [RateGetter],
    what: &'static str,
}

const FAMILY: &[Gap] = &[
    Gap {
        metric: "equalized_odds",
        rates: &[("tpr", |r| r.tpr, "no positive ground-truth decisions"), ("fpr", |r| r.fpr, "no negative ground-truth decisions")],
        what: "true and false positive rates",
    },
    Gap {
        metric: "equal_opportunity",
        rates: &[("tpr", |r| r.tpr, "no positive ground-truth decisions")],
        what: "true positive rates",
    },
    Gap {
        metric: "predictive_equality",
        rates: &[("fpr", |r| r.fpr, "no negative ground-truth decisions")],
        what: "false positive rates",
    },
    Gap {
        metric: "overall_accuracy_equality",
        rates: &[("accuracy", |r| r.accuracy, "empty group")],
        what: "accuracies",
    },
    Gap {
        metric: "treatment_equality",
        rates: &[("fn_fp_ratio", |r| r.fn_fp_ratio, "zero false positives")],
        what: "false negative to false positive ratios",
    },
    Gap {
        metric: "predictive_parity",
        rates: &[("ppv", |r| r.ppv, "no positive predicted decisions")],
        what: "positive predictive values",
    },
    Gap {
        metric: "statistical_parity",
        rates: &[("positive_rate", |r| r.positive_rate, "empty group")],
        what: "selection rates",
    },
];

/// One result per rate-equality metric: equalized odds, equal opportunity,
/// predictive equality, overall accuracy equality, treatment equality,
/// predictive parity (equal PPV) and statistical parity. A metric is
/// satisfied when every gap it covers is within its tolerance.
pub fn fairness_family(
    rates_a: &GroupRates<f64>,
    rates_b: &GroupRates<f64>,
    labels: (&str, &str),
    thresholds: &FlagThresholds,
) -> Vec<MetricResult> {
    FAMILY
        .iter()
        .map(|g| {
            let eps = thresholds.epsilon_for(g.metric);
            let mut res = MetricResult::new(g.metric, Stage::Decision);
            res.threshold_used = Some(eps);
            let mut undefined = Vec::new();
            let mut worst: f64 = 0.0;
            for (name, get, why) in g.rates {
                match (get(rates_a), get(rates_b)) {
                    (Some(a), Some(b)) => {
                        let gap = (a - b).abs();
                        worst = worst.max(gap);
                        res.per_group.insert(format!("{name}_a"), a);
                        res.per_group.insert(format!("{name}_b"), b);
                        res.values.insert(format!("{name}_gap"), gap);
                    }
                    (a, b) => {
                        let missing: Vec<&str> = [(a, labels.0), (b, labels.1)]
                            .iter()
                            .filter(|(v, _)| v.is_none())
                            .map(|(_, l)| *l)
                            .collect();
                        undefined.push(format!("{why} in {}", missing.join(" and ")));
                    }
                }
            }
            if !undefined.is_empty() {
                res.flag = Flag::Undefined;
                res.rationale = format!("undefined ({})", undefined.join("; "));
            } else if worst <= eps {
                res.flag = Flag::Ok;
                res.rationale = format!("group {} differ by at most {worst:.4} <= {eps}", g.what);
            } else {
                res.flag = Flag::Suspect;
                res.rationale = format!("group {} differ by {worst:.4} > {eps}", g.what);
            }
            if g.metric == "predictive_parity" {
                res.notes.push("implemented as equal positive predictive value across groups".into());
            }
            res
        })
        .collect()
}

/// Whether a family result is satisfied (ok).
pub fn satisfied(results: &[MetricResult], metric: &str) -> Option<bool> {
    results.iter().find(|r| r.metric == metric).map(|r| r.flag == Flag::Ok)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, via the rank-sum statistic.
pub fn auc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<T> {
    if scores.len() != labels.len() {
        return Err(AuditError::LengthMismatch(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AuditError::SingleClass(format!("{n_pos} positives, {n_neg} negatives")));
    }
    let ranks = fractional_ranks(scores);
    let rank_sum = sum(ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(&r, _)| r));
    let np = T::from_count(n_pos);
    let u = rank_sum - np * (np + T::one()) / T::lit(2.0);
    Ok(u / (np * T::from_count(n_neg)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucParity {
    pub auc_a: f64,
    pub auc_b: f64,
    pub gap: f64,
}

/// Per-group AUC of predictions against ground-truth decisions.
pub fn auc_parity(table: &AuditTable, part: &GroupPartition, rule: &DecisionSpec) -> Result<AucParity> {
    let truth = decide_partitioned(table, part, ScoreColumn::Truth, rule)?;
    let sign = if table.scale.higher_is_better { 1.0 } else { -1.0 };
    let pred: Vec<f64> = table.y_pred().into_iter().map(|p| sign * p).collect();
    let group_auc = |idx: &[usize], label: &str| {
        let labels: Vec<bool> = idx.iter().map(|&i| truth[i]).collect();
        auc(&gather(&pred, idx), &labels).map_err(|e| match e {
            AuditError::SingleClass(m) => AuditError::SingleClass(format!("group `{label}`: {m}")),
            other => other,
        })
    };
    let auc_a = group_auc(&part.idx_a, &part.group_a_label)?;
    let auc_b = group_auc(&part.idx_b, &part.group_b_label)?;
    Ok(AucParity { auc_a, auc_b, gap: (auc_a - auc_b).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    fn auc_pairs(pos: &[f64], neg: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in pos {
            for n in neg {
                s += if p > n { 1.0 } else if p == n { 0.5 } else { 0.0 };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    fn split(scores: &[f64], labels: &[bool]) -> (Vec<f64>, Vec<f64>) {
        let pos = scores.iter().zip(labels).filter(|(_, &l)| l).map(|(s, _)| *s).collect();
        let neg = scores.iter().zip(labels).filter(|(_, &l)| !l).map(|(s, _)| *s).collect();
        (pos, neg)
    }

    #[test]
    fn top_k_tie_break_by_id() {
        let d = binarize(&[5.0, 4.0, 4.0, 1.0], &["a", "b", "c", "d"], &DecisionSpec::top_k_rate(0.5).unwrap()).unwrap();
        assert_eq!(d, vec![true, true, false, false]);
        let d = top_k(&[5.0, 4.0, 4.0, 1.0], &["a", "c", "b", "d"], 2).unwrap();
        assert_eq!(d, vec![true, false, true, false]);
        assert_eq!(top_k(&[1.0, 2.0], &["a", "b"], 0).unwrap(), vec![false, false]);
        assert_eq!(top_k(&[1.0, 2.0], &["a", "b"], 3), Err(AuditError::InvalidK { k: 3, n: 2 }));
        assert_eq!(top_k(&[1.0, 2.0], &["a", "b"], -1), Err(AuditError::InvalidK { k: -1, n: 2 }));
    }

    #[test]
    fn threshold_at_minimum_selects_all() {
        let s = [3.0, 1.5, 6.0];
        let d = binarize(&s, &["x", "y", "z"], &DecisionSpec::threshold(1.5).unwrap()).unwrap();
        assert_eq!(d, vec![true, true, true]);
    }

    fn part(n_a: usize, n: usize) -> GroupPartition {
        GroupPartition {
            group_a_label: "a".into(),
            group_b_label: "b".into(),
            idx_a: (0..n_a).collect(),
            idx_b: (n_a..n).collect(),
            excluded: 0,
        }
    }

    #[test]
    fn confusion_examples() {
        let d = [true, false, true, false, true, false];
        let (a, b) = confusion_by_group(&d, &d, &part(3, 6)).unwrap();
        assert_eq!((a.fp, a.fn_, b.fp, b.fn_), (0, 0, 0, 0));

        let (a, _) = confusion_by_group(&[true; 5], &[false; 5], &part(5, 5)).unwrap();
        assert_eq!(a, ConfusionMatrix { tp: 0, fp: 5, tn: 0, fn_: 0 });
        assert!(confusion_by_group(&[true; 5], &[false; 4], &part(2, 4)).is_err());
    }

    #[test]
    fn confusion_matches_row_tally() {
        let mut rng = CounterRng::new(3);
        for _ in 0..20 {
            let pred: Vec<bool> = (0..20).map(|_| rng.next_u64() % 2 == 0).collect();
            let truth: Vec<bool> = (0..20).map(|_| rng.next_u64() % 3 == 0).collect();
            let p = part(9, 20);
            let (a, b) = confusion_by_group(&pred, &truth, &p).unwrap();
            for (cm, range) in [(a, 0..9), (b, 9..20)] {
                let count = |pv: bool, tv: bool| range.clone().filter(|&i| pred[i] == pv && truth[i] == tv).count() as u64;
                assert_eq!(cm.tp, count(true, true));
                assert_eq!(cm.fp, count(true, false));
                assert_eq!(cm.tn, count(false, false));
                assert_eq!(cm.fn_, count(false, true));
                assert_eq!(cm.total(), range.len() as u64);
            }
        }
    }

    fn rates(tpr: f64, fpr: f64) -> GroupRates<f64> {
        GroupRates { tpr: Some(tpr), fpr: Some(fpr), ppv: Some(0.5), accuracy: Some(0.9), positive_rate: Some(0.1), fn_fp_ratio: Some(1.0) }
    }

    #[test]
    fn family_examples() {
        let t = FlagThresholds::default();
        let same = fairness_family(&rates(0.8, 0.1), &rates(0.8, 0.1), ("a", "b"), &t);
        assert_eq!(same.len(), 7);
        assert!(same.iter().all(|r| r.flag == Flag::Ok));
        assert!(same.iter().all(|r| r.values.values().all(|&g| g == 0.0)));

        let r = fairness_family(&rates(0.9, 0.1), &rates(0.7, 0.1), ("a", "b"), &t);
        let eo = r.iter().find(|m| m.metric == "equal_opportunity").unwrap();
        assert!((eo.values["tpr_gap"] - 0.2).abs() < 1e-12);
        assert_eq!(satisfied(&r, "equal_opportunity"), Some(false));
        assert_eq!(satisfied(&r, "equalized_odds"), Some(false));
        assert_eq!(satisfied(&r, "predictive_equality"), Some(true));

        let cm_b = ConfusionMatrix { tp: 3, fp: 0, tn: 5, fn_: 2 };
        let cm_a = ConfusionMatrix { tp: 3, fp: 1, tn: 5, fn_: 2 };
        let r = fairness_family(&cm_a.rates(), &cm_b.rates(), ("a", "b"), &t);
        let te = r.iter().find(|m| m.metric == "treatment_equality").unwrap();
        assert_eq!(te.flag, Flag::Undefined);
        assert_eq!(te.rationale, "undefined (zero false positives in b)");
    }

    #[test]
    fn auc_examples() {
        let s = [0.9, 0.4, 0.5, 0.1];
        let l = [true, true, false, false];
        assert_eq!(auc(&s, &l).unwrap(), 0.75);
        assert_eq!(auc(&[0.9, 0.8, 0.2], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(AuditError::SingleClass(_))));
        assert_eq!(auc(&[0.9f32, 0.4, 0.5, 0.1], &l).unwrap(), 0.75f32);
    }

    proptest! {
        #[test]
        fn auc_matches_pairs_and_complement(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..40),
        ) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0)).collect();
            let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
            if let Ok(a) = auc(&scores, &labels) {
                let (pos, neg) = split(&scores, &labels);
                prop_assert!((a - auc_pairs(&pos, &neg)).abs() < 1e-12);
                let neg_scores: Vec<f64> = scores.iter().map(|s| -s).collect();
                prop_assert!((a + auc(&neg_scores, &labels).unwrap() - 1.0).abs() < 1e-12);
                let mono: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
                prop_assert_eq!(a, auc(&mono, &labels).unwrap());
            }
        }

        #[test]
        fn equalized_odds_is_conjunction(
            a in (0u64..20, 0u64..20, 0u64..20, 0u64..20),
            b in (0u64..20, 0u64..20, 0u64..20, 0u64..20),
        ) {
            let ca = ConfusionMatrix { tp: a.0, fp: a.1, tn: a.2, fn_: a.3 };
            let cb = ConfusionMatrix { tp: b.0, fp: b.1, tn: b.2, fn_: b.3 };
            let r = fairness_family(&ca.rates(), &cb.rates(), ("a", "b"), &FlagThresholds::default());
            let eo = satisfied(&r, "equalized_odds").unwrap();
            let opp = satisfied(&r, "equal_opportunity").unwrap();
            let pe = satisfied(&r, "predictive_equality").unwrap();
            prop_assert_eq!(eo, opp && pe);
        }

        #[test]
        fn group_swap_keeps_gaps(
            a in (0u64..20, 1u64..20, 0u64..20, 1u64..20),
            b in (0u64..20, 1u64..20, 0u64..20, 1u64..20),
        ) {
            let ca = ConfusionMatrix { tp: a.0, fp: a.1, tn: a.2, fn_: a.3 };
            let cb = ConfusionMatrix { tp: b.0, fp: b.1, tn: b.2, fn_: b.3 };
            let t = FlagThresholds::default();
            let r1 = fairness_family(&ca.rates(), &cb.rates(), ("a", "b"), &t);
            let r2 = fairness_family(&cb.rates(), &ca.rates(), ("b", "a"), &t);
            for (x, y) in r1.iter().zip(&r2) {
                prop_assert_eq!(&x.values, &y.values);
                prop_assert_eq!(x.flag, y.flag);
            }
        }

        #[test]
        fn top_k_count(scores in prop::collection::vec(0u8..5, 0..50), k in 0usize..60) {
            let s: Vec<f64> = scores.iter().map(|&v| f64::from(v)).collect();
            let ids: Vec<String> = (0..s.len()).map(|i| format!("{i:03}")).collect();
            let k = k.min(s.len());
            let d = top_k(&s, &ids, k as i64).unwrap();
            prop_assert_eq!(d.iter().filter(|&&x| x).count(), k);
        }
    }
}
