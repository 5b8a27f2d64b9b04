//! End-to-end audit of one table: every metric, flagged and assembled.

use crate::classification::{auc_parity, confusion_for_rule, fairness_family};
use crate::config::AuditConfig;
use crate::data::{partition, AuditTable, GroupPartition};
use crate::decision::{adverse_impact, conditional_demographic_parity, single_threshold_check, ScoreColumn, FOUR_FIFTHS};
use crate::effect::{effect_size_difference, range_restriction};
use crate::error::{AuditError, Result};
use crate::rank::correlational_accuracy;
use crate::reliability::{icc_1k, item_rest_for_rater, AnnotationMatrix};
use crate::report::{
    flag_effect_size, flag_rho_diff, AuditReport, ConstructSummary, Flag, FlagThresholds, MetricResult, Stage,
    SummaryInputs, TableMetadata,
};
use crate::screen::{leakage_screen, unawareness_check};

/// Partition named by the configuration, or the two labels of the table in
/// alphabetical order when none is named.
pub fn resolve_partition(table: &AuditTable, config: &AuditConfig) -> Result<GroupPartition> {
    match &config.groups {
        Some((a, b)) => partition(table, a, b),
        None => {
            let mut labels = table.group_labels();
            if labels.len() != 2 {
                return Err(AuditError::Config(format!(
                    "table has {} group labels ({}); name the pair with `groups`",
                    labels.len(),
                    labels.join(", ")
                )));
            }
            labels.sort();
            partition(table, &labels[0], &labels[1])
        }
    }
}

fn metadata(table: &AuditTable, part: &GroupPartition) -> TableMetadata {
    TableMetadata {
        construct: table.construct_name().to_string(),
        n_rows: table.len(),
        group_column: table.group_column_name().to_string(),
        group_a: part.group_a_label.clone(),
        group_b: part.group_b_label.clone(),
        n_a: part.n_a(),
        n_b: part.n_b(),
        excluded: part.excluded,
        selection_population: part.n_a() + part.n_b(),
        raters: table.rater_names.clone(),
        features: table.feature_names.clone(),
    }
}

fn or_undefined(metric: &str, stage: Stage, construct: &str, r: Result<MetricResult>) -> MetricResult {
    r.unwrap_or_else(|e| MetricResult::undefined(metric, stage, format!("undefined ({e})")).with_construct(construct))
}

fn feature_metrics(table: &AuditTable, part: &GroupPartition, config: &AuditConfig) -> Vec<MetricResult> {
    let construct = table.construct_name();
    let t = &config.thresholds;
    let mut out = vec![unawareness_check(table, &config.forbidden_columns())];
    match leakage_screen(table, part, t.leakage) {
        Ok(reports) => out.extend(reports.iter().map(|r| r.to_metric(construct, t.leakage))),
        Err(e) => out.push(
            MetricResult::undefined("feature_leakage", Stage::Feature, format!("undefined ({e})"))
                .with_construct(construct),
        ),
    }
    out
}

/// Feature-stage checks only.
pub fn run_screen(table: &AuditTable, config: &AuditConfig) -> Result<AuditReport> {
    config.validate()?;
    let part = resolve_partition(table, config)?;
    let mut report = AuditReport::new(config.echo());
    report.tables.push(metadata(table, &part));
    report.extend_results(feature_metrics(table, &part, config));
    Ok(report)
}

fn reliability_metrics(
    table: &AuditTable,
    part: &GroupPartition,
    t: &FlagThresholds,
    report: &mut AuditReport,
) -> Vec<MetricResult> {
    let construct = table.construct_name();
    let mut out = Vec::new();
    let m = match AnnotationMatrix::from_table(table) {
        Ok(m) => m,
        Err(e) => {
            out.push(
                MetricResult::undefined("icc_1k", Stage::GroundTruth, format!("undefined ({e})"))
                    .with_construct(construct),
            );
            return out;
        }
    };
    let (complete, dropped) = m.complete_rows();
    let icc = icc_1k(&complete).map(|icc| {
        report.record_icc(construct, icc, dropped, t.icc_gate);
        let mut r = MetricResult::new("icc_1k", Stage::GroundTruth)
            .with_construct(construct)
            .value("icc", icc)
            .value("targets_used", complete.n_targets() as f64)
            .value("targets_dropped", dropped as f64);
        r.threshold_used = Some(t.icc_gate);
        if icc >= t.icc_gate {
            r.rationale = format!("ICC(1,k) {icc:.4} >= gate {}", t.icc_gate);
        } else {
            r.flag = Flag::Suspect;
            r.rationale = format!("ICC(1,k) {icc:.4} below gate {}", t.icc_gate);
        }
        if dropped > 0 {
            r.notes.push(format!("{dropped} targets with missing ratings dropped listwise"));
        }
        r
    });
    out.push(or_undefined("icc_1k", Stage::GroundTruth, construct, icc));
    for j in 0..m.n_raters() {
        let metric = format!("rater_dif:{}", m.rater_ids()[j]);
        let r = item_rest_for_rater(&m, part, j, t.dif).map(|rec| {
            let mut r = MetricResult::new(metric.clone(), Stage::GroundTruth)
                .with_construct(construct)
                .value("diff", rec.diff)
                .group(&part.group_a_label, rec.r_a)
                .group(&part.group_b_label, rec.r_b);
            r.threshold_used = Some(t.dif);
            if rec.flagged {
                r.flag = Flag::Suspect;
                r.rationale = format!("item-rest correlation differs by {:.4} > {}", rec.diff.abs(), t.dif);
            } else {
                r.rationale = format!("item-rest correlation differs by {:.4} <= {}", rec.diff.abs(), t.dif);
            }
            r
        });
        out.push(or_undefined(&metric, Stage::GroundTruth, construct, r));
    }
    out
}

fn adverse_impact_metric(
    table: &AuditTable,
    part: &GroupPartition,
    config: &AuditConfig,
    column: ScoreColumn,
) -> (MetricResult, Option<f64>) {
    let t = &config.thresholds;
    let construct = table.construct_name();
    let (metric, stage) = match column {
        ScoreColumn::Pred => ("adverse_impact", Stage::Decision),
        ScoreColumn::Truth => ("adverse_impact_ground_truth", Stage::GroundTruth),
    };
    match adverse_impact(table, part, &config.decision, column) {
        Ok(ai) => {
            let mut r = MetricResult::new(metric, stage)
                .with_construct(construct)
                .value("ai_ratio", ai.ai_ratio)
                .value("k", (ai.selected_a + ai.selected_b) as f64)
                .group(&part.group_a_label, ai.sr_a)
                .group(&part.group_b_label, ai.sr_b);
            r.threshold_used = Some(t.adverse_impact);
            let below = if t.adverse_impact == FOUR_FIFTHS {
                ai.four_fifths_violation
            } else {
                ai.ai_ratio < t.adverse_impact
            };
            r.flag = match (below, column) {
                (false, _) => Flag::Ok,
                (true, ScoreColumn::Pred) => Flag::Violation,
                (true, ScoreColumn::Truth) => Flag::Suspect,
            };
            r.rationale = match (below, column) {
                (false, _) => format!("selection ratio {:.4} >= {}", ai.ai_ratio, t.adverse_impact),
                (true, ScoreColumn::Pred) => {
                    format!("selection ratio {:.4} < {}; four-fifths rule violated", ai.ai_ratio, t.adverse_impact)
                }
                (true, ScoreColumn::Truth) => format!(
                    "ground-truth selections alone give ratio {:.4} < {}",
                    ai.ai_ratio, t.adverse_impact
                ),
            };
            if let Some(n) = ai.note {
                r.notes.push(n);
            }
            (r, Some(ai.ai_ratio))
        }
        Err(e) => (
            MetricResult::undefined(metric, stage, format!("undefined ({e})")).with_construct(construct),
            None,
        ),
    }
}

/// Runs every applicable metric on `table`. Metric-level failures become
/// `undefined` results; only input and configuration problems are errors.
pub fn run_audit(table: &AuditTable, config: &AuditConfig) -> Result<AuditReport> {
    config.validate()?;
    let part = resolve_partition(table, config)?;
    let t = &config.thresholds;
    let construct = table.construct_name();
    let mut report = AuditReport::new(config.echo());
    report.tables.push(metadata(table, &part));
    let mut results = Vec::new();
    let mut inputs = SummaryInputs::default();

    if table.rater_names.len() >= 2 {
        results.extend(reliability_metrics(table, &part, t, &mut report));
    }
    if !table.feature_names.is_empty() {
        results.extend(feature_metrics(table, &part, config));
    } else {
        results.push(unawareness_check(table, &config.forbidden_columns()));
    }

    let corr = correlational_accuracy(table, &part).map(|c| {
        inputs.rho = Some((c.rho_all, c.rho_a, c.rho_b));
        let mut r = MetricResult::new("correlational_accuracy", Stage::Prediction)
            .with_construct(construct)
            .value("rho_all", c.rho_all)
            .value("diff", c.diff_a_minus_b)
            .group(&part.group_a_label, c.rho_a)
            .group(&part.group_b_label, c.rho_b);
        if let Some(z) = c.z_stat {
            r.values.insert("z".into(), z);
        }
        r.threshold_used = Some(t.rho_diff);
        r.flag = flag_rho_diff(c.diff_a_minus_b, t);
        let cmp = if r.flag.is_raised() { ">" } else { "<=" };
        r.rationale = format!("|rho_a - rho_b| = {:.4} {cmp} {}", c.diff_a_minus_b.abs(), t.rho_diff);
        r
    });
    results.push(or_undefined("correlational_accuracy", Stage::Prediction, construct, corr));

    let effect = effect_size_difference(table, &part).map(|e| {
        inputs.d = Some((e.d_true, e.d_pred));
        let mut r = MetricResult::new("effect_size_difference", Stage::Prediction)
            .with_construct(construct)
            .value("d_true", e.d_true)
            .value("d_pred", e.d_pred)
            .value("diff", e.diff_true_minus_pred)
            .value("pooled_sd_true", e.pooled_sd_true)
            .value("pooled_sd_pred", e.pooled_sd_pred);
        r.threshold_used = Some(t.effect_size);
        r.flag = flag_effect_size(e.diff_true_minus_pred, e.d_pred, t);
        r.rationale = if r.flag.is_raised() {
            format!(
                "|d_true - d_pred| = {:.4}, |d_pred| = {:.4}; one exceeds {}",
                e.diff_true_minus_pred.abs(),
                e.d_pred.abs(),
                t.effect_size
            )
        } else {
            format!(
                "|d_true - d_pred| = {:.4} and |d_pred| = {:.4} within {}",
                e.diff_true_minus_pred.abs(),
                e.d_pred.abs(),
                t.effect_size
            )
        };
        r
    });
    results.push(or_undefined("effect_size_difference", Stage::Prediction, construct, effect));

    let range = range_restriction(table).map(|rr| {
        let mut r = MetricResult::new("range_restriction", Stage::Prediction)
            .with_construct(construct)
            .value("sd_ratio", rr.sd_ratio)
            .value("min_true", rr.min_true)
            .value("max_true", rr.max_true)
            .value("min_pred", rr.min_pred)
            .value("max_pred", rr.max_pred);
        r.threshold_used = Some(t.sd_ratio);
        if rr.sd_ratio < t.sd_ratio {
            r.flag = Flag::Suspect;
            r.rationale = format!("predictions spread {:.4} of ground truth SD (< {})", rr.sd_ratio, t.sd_ratio);
        } else {
            r.rationale = format!("prediction/truth SD ratio {:.4} >= {}", rr.sd_ratio, t.sd_ratio);
        }
        r
    });
    results.push(or_undefined("range_restriction", Stage::Prediction, construct, range));

    let auc = auc_parity(table, &part, &config.decision).map(|a| {
        let eps = t.epsilon_for("auc_parity");
        let mut r = MetricResult::new("auc_parity", Stage::Prediction)
            .with_construct(construct)
            .value("gap", a.gap)
            .group(&part.group_a_label, a.auc_a)
            .group(&part.group_b_label, a.auc_b);
        r.threshold_used = Some(eps);
        if a.gap > eps {
            r.flag = Flag::Suspect;
            r.rationale = format!("group AUCs differ by {:.4} > {eps}", a.gap);
        } else {
            r.rationale = format!("group AUCs differ by {:.4} <= {eps}", a.gap);
        }
        r
    });
    results.push(or_undefined("auc_parity", Stage::Prediction, construct, auc));

    match confusion_for_rule(table, &part, &config.decision) {
        Ok((cm_a, cm_b)) => {
            let labels = (part.group_a_label.as_str(), part.group_b_label.as_str());
            results.extend(
                fairness_family(&cm_a.rates(), &cm_b.rates(), labels, t)
                    .into_iter()
                    .map(|r| r.with_construct(construct)),
            );
        }
        Err(e) => results.push(
            MetricResult::undefined("confusion_family", Stage::Decision, format!("undefined ({e})"))
                .with_construct(construct),
        ),
    }

    let (ai_pred, ratio_pred) = adverse_impact_metric(table, &part, config, ScoreColumn::Pred);
    let (ai_true, ratio_true) = adverse_impact_metric(table, &part, config, ScoreColumn::Truth);
    inputs.ai_pred = ratio_pred;
    inputs.ai_true = ratio_true;
    results.push(ai_pred);
    results.push(ai_true);

    if let Some(strata) = &config.strata_col {
        let eps = t.epsilon_for("conditional_demographic_parity");
        let cdp = conditional_demographic_parity(table, &part, &config.decision, strata).map(|c| {
            let mut r = MetricResult::new("conditional_demographic_parity", Stage::Decision)
                .with_construct(construct)
                .value("strata", c.strata.len() as f64);
            r.threshold_used = Some(eps);
            for s in &c.strata {
                r.values.insert(format!("gap[{}]", s.stratum), s.gap);
            }
            match c.max_gap {
                None => {
                    r.flag = Flag::Undefined;
                    r.rationale = format!("undefined (no stratum of `{strata}` holds both groups)");
                }
                Some(g) => {
                    r.values.insert("max_gap".into(), g);
                    r.flag = if g > eps { Flag::Suspect } else { Flag::Ok };
                    let cmp = if g > eps { ">" } else { "<=" };
                    r.rationale = format!("largest within-stratum selection gap {g:.4} {cmp} {eps}");
                }
            }
            if !c.sparse_strata.is_empty() {
                r.notes.push(format!("strata missing a group: {}", c.sparse_strata.join(", ")));
            }
            if c.missing_rows > 0 {
                r.notes.push(format!("{} rows without a `{strata}` value", c.missing_rows));
            }
            r
        });
        results.push(or_undefined("conditional_demographic_parity", Stage::Decision, construct, cdp));
    }

    results.push(single_threshold_check(&config.decision, &config.overrides).with_construct(construct));

    report.summary.push(ConstructSummary::new(construct, inputs, t));
    report.extend_results(results);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthSpec};

    fn spec() -> SynthSpec {
        SynthSpec { n_per_group: 300, ..SynthSpec::default() }
    }

    #[test]
    fn report_is_sorted_and_complete() {
        let t = generate(&spec()).unwrap().table;
        let r = run_audit(&t, &AuditConfig::default()).unwrap();
        let keys: Vec<_> = r.results.iter().map(|m| (m.stage, m.metric.clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for m in [
            "icc_1k",
            "rater_dif:rater_1",
            "fairness_through_unawareness",
            "feature_leakage:f_1",
            "correlational_accuracy",
            "effect_size_difference",
            "range_restriction",
            "auc_parity",
            "equalized_odds",
            "treatment_equality",
            "adverse_impact",
            "adverse_impact_ground_truth",
            "single_threshold",
        ] {
            assert!(r.results.iter().any(|x| x.metric == m), "missing {m}");
        }
        assert_eq!(r.summary.len(), 1);
        assert!(r.icc_gate.as_ref().unwrap().passed);
        assert_eq!(r.tables[0].group_a, "a");
    }

    #[test]
    fn contamination_violates_four_fifths() {
        let t = generate(&SynthSpec { contamination_shift_b: -0.8, ..spec() }).unwrap().table;
        let r = run_audit(&t, &AuditConfig::default()).unwrap();
        let ai = r.results.iter().find(|m| m.metric == "adverse_impact").unwrap();
        assert_eq!(ai.flag, Flag::Violation);
        assert!(r.has_violation());
    }

    #[test]
    fn groups_must_be_resolvable() {
        let t = generate(&spec()).unwrap().table;
        let c = AuditConfig { groups: Some(("a".into(), "zz".into())), ..AuditConfig::default() };
        assert!(matches!(run_audit(&t, &c), Err(AuditError::UnknownGroupLabel(_))));
    }

    #[test]
    fn unusable_metrics_become_undefined() {
        let mut t = generate(&SynthSpec { n_per_group: 20, ..spec() }).unwrap().table;
        for r in &mut t.records {
            r.y_pred = 4.0;
        }
        let r = run_audit(&t, &AuditConfig::default()).unwrap();
        let corr = r.results.iter().find(|m| m.metric == "correlational_accuracy").unwrap();
        assert_eq!(corr.flag, Flag::Undefined);
        assert!(corr.rationale.starts_with("undefined"));
    }

    #[test]
    fn screen_reports_only_feature_stage() {
        let t = generate(&SynthSpec { leaky_feature_weight: 2.0, ..spec() }).unwrap().table;
        let r = run_screen(&t, &AuditConfig::default()).unwrap();
        assert!(r.results.iter().all(|m| m.stage == Stage::Feature));
        let leak = r.results.iter().find(|m| m.metric == "feature_leakage:f_1").unwrap();
        assert_eq!(leak.flag, Flag::Suspect);
    }
}
