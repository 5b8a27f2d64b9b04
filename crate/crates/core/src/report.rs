//! Metric results, flagging rules and the assembled audit report with its
//! JSON and Markdown renderings.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::TOOL_VERSION;

pub const SCHEMA_VERSION: &str = "fairscope.audit/1";

/// ICC(1,k) of the reference annotation study, shown next to the gate.
pub const ICC_REFERENCE: f64 = 0.67;

/// Pipeline region whose inputs a metric consumes. Declaration order is the
/// report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GroundTruth,
    Feature,
    Prediction,
    Decision,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::GroundTruth => "ground_truth",
            Stage::Feature => "feature",
            Stage::Prediction => "prediction",
            Stage::Decision => "decision",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Ok,
    Suspect,
    Violation,
    Undefined,
}

impl Flag {
    /// Ordering of the defined flags; `Undefined` sits outside it.
    pub fn severity(self) -> Option<u8> {
        match self {
            Flag::Ok => Some(0),
            Flag::Suspect => Some(1),
            Flag::Violation => Some(2),
            Flag::Undefined => None,
        }
    }

    pub fn is_raised(self) -> bool {
        matches!(self, Flag::Suspect | Flag::Violation)
    }
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flag::Ok => "ok",
            Flag::Suspect => "suspect",
            Flag::Violation => "violation",
            Flag::Undefined => "undefined",
        })
    }
}

/// Thresholds behind every flag. All are echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagThresholds {
    /// |rho_a - rho_b| above this is suspect.
    pub rho_diff: f64,
    /// |d_true - d_pred| or |d_pred| above this is suspect.
    pub effect_size: f64,
    /// Adverse impact ratios below this are violations.
    pub adverse_impact: f64,
    /// Prediction/truth SD ratios below this suggest range restriction.
    pub sd_ratio: f64,
    /// Default equality tolerance for rate gaps.
    pub epsilon: f64,
    /// Per-metric tolerance overrides, keyed by metric name.
    pub epsilon_overrides: BTreeMap<String, f64>,
    /// Folded feature/group AUC at or above this is flagged.
    pub leakage: f64,
    /// Minimum acceptable ICC(1,k) of the annotation panel.
    pub icc_gate: f64,
    /// |r_a - r_b| of a rater's item-rest correlation above this is flagged.
    pub dif: f64,
}

impl Default for FlagThresholds {
    fn default() -> Self {
        Self {
            rho_diff: 0.1,
            effect_size: 0.2,
            adverse_impact: crate::decision::FOUR_FIFTHS,
            sd_ratio: 0.8,
            epsilon: 0.05,
            epsilon_overrides: BTreeMap::new(),
            leakage: 0.65,
            icc_gate: 0.60,
            dif: 0.1,
        }
    }
}

impl FlagThresholds {
    pub fn epsilon_for(&self, metric: &str) -> f64 {
        self.epsilon_overrides.get(metric).copied().unwrap_or(self.epsilon)
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rho_diff_threshold", self.rho_diff),
            ("effect_size_threshold", self.effect_size),
            ("ai_threshold", self.adverse_impact),
            ("sd_ratio_threshold", self.sd_ratio),
            ("epsilon", self.epsilon),
            ("leakage_threshold", self.leakage),
            ("icc_gate", self.icc_gate),
            ("dif_threshold", self.dif),
        ];
        let overrides = self.epsilon_overrides.iter().map(|(k, v)| (k.as_str(), *v));
        for (name, v) in named.into_iter().chain(overrides) {
            if !(v > 0.0) || !v.is_finite() {
                return Err(AuditError::Config(format!("threshold `{name}` must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

pub fn flag_rho_diff(diff: f64, t: &FlagThresholds) -> Flag {
    if diff.abs() > t.rho_diff {
        Flag::Suspect
    } else {
        Flag::Ok
    }
}

pub fn flag_effect_size(diff_true_minus_pred: f64, d_pred: f64, t: &FlagThresholds) -> Flag {
    if diff_true_minus_pred.abs() > t.effect_size || d_pred.abs() > t.effect_size {
        Flag::Suspect
    } else {
        Flag::Ok
    }
}

pub fn flag_adverse_impact(ai_ratio: Option<f64>, t: &FlagThresholds) -> Flag {
    match ai_ratio {
        None => Flag::Undefined,
        Some(ai) if ai < t.adverse_impact => Flag::Violation,
        Some(_) => Flag::Ok,
    }
}

/// One computed metric with its stage, values and flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub stage: Stage,
    pub construct: String,
    pub values: BTreeMap<String, f64>,
    pub per_group: BTreeMap<String, f64>,
    pub flag: Flag,
    pub rationale: String,
    pub threshold_used: Option<f64>,
    pub notes: Vec<String>,
}

impl MetricResult {
    pub fn new(metric: impl Into<String>, stage: Stage) -> Self {
        Self {
            metric: metric.into(),
            stage,
            construct: String::new(),
            values: BTreeMap::new(),
            per_group: BTreeMap::new(),
            flag: Flag::Ok,
            rationale: String::new(),
            threshold_used: None,
            notes: Vec::new(),
        }
    }

    pub fn undefined(metric: impl Into<String>, stage: Stage, reason: impl Into<String>) -> Self {
        let mut r = Self::new(metric, stage);
        r.flag = Flag::Undefined;
        r.rationale = reason.into();
        r
    }

    pub fn with_construct(mut self, construct: &str) -> Self {
        self.construct = construct.to_string();
        self
    }

    pub fn value(mut self, name: &str, v: f64) -> Self {
        self.values.insert(name.to_string(), v);
        self
    }

    pub fn group(mut self, name: &str, v: f64) -> Self {
        self.per_group.insert(name.to_string(), v);
        self
    }

    fn sort_key(&self) -> (Stage, &str, &str) {
        (self.stage, &self.metric, &self.construct)
    }
}

/// One summary cell; `flagged` cells render bold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: Option<f64>,
    pub flagged: bool,
}

impl Cell {
    pub fn plain(value: Option<f64>) -> Self {
        Self { value, flagged: false }
    }
}

/// Correlational accuracy, effect sizes and adverse impact for one
/// construct, laid out as one row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructSummary {
    pub construct: String,
    pub rho_all: Cell,
    pub rho_a: Cell,
    pub rho_b: Cell,
    pub rho_diff: Cell,
    pub d_true: Cell,
    pub d_pred: Cell,
    pub d_diff: Cell,
    pub ai_true: Cell,
    pub ai_pred: Cell,
}

/// Raw numbers for a [`ConstructSummary`]; any part may be missing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SummaryInputs {
    /// (all, group A, group B)
    pub rho: Option<(f64, f64, f64)>,
    /// (ground truth, predictions)
    pub d: Option<(f64, f64)>,
    pub ai_true: Option<f64>,
    pub ai_pred: Option<f64>,
}

impl ConstructSummary {
    /// Differences are formed here; only the difference columns and the
    /// adverse impact columns can be flagged.
    pub fn new(construct: &str, inputs: SummaryInputs, t: &FlagThresholds) -> Self {
        let (rho_all, rho_a, rho_b, rho_diff) = match inputs.rho {
            Some((all, a, b)) => {
                let diff = a - b;
                (
                    Cell::plain(Some(all)),
                    Cell::plain(Some(a)),
                    Cell::plain(Some(b)),
                    Cell { value: Some(diff), flagged: flag_rho_diff(diff, t).is_raised() },
                )
            }
            None => (Cell::plain(None), Cell::plain(None), Cell::plain(None), Cell::plain(None)),
        };
        let (d_true, d_pred, d_diff) = match inputs.d {
            Some((dt, dp)) => {
                let diff = dt - dp;
                (
                    Cell::plain(Some(dt)),
                    Cell::plain(Some(dp)),
                    Cell { value: Some(diff), flagged: diff.abs() > t.effect_size },
                )
            }
            None => (Cell::plain(None), Cell::plain(None), Cell::plain(None)),
        };
        let ai = |v: Option<f64>| Cell { value: v, flagged: flag_adverse_impact(v, t) == Flag::Violation };
        Self {
            construct: construct.to_string(),
            rho_all,
            rho_a,
            rho_b,
            rho_diff,
            d_true,
            d_pred,
            d_diff,
            ai_true: ai(inputs.ai_true),
            ai_pred: ai(inputs.ai_pred),
        }
    }

    pub fn cells(&self) -> [&Cell; 9] {
        [
            &self.rho_all,
            &self.rho_a,
            &self.rho_b,
            &self.rho_diff,
            &self.d_true,
            &self.d_pred,
            &self.d_diff,
            &self.ai_true,
            &self.ai_pred,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub construct: String,
    pub n_rows: usize,
    pub group_column: String,
    pub group_a: String,
    pub group_b: String,
    pub n_a: usize,
    pub n_b: usize,
    pub excluded: usize,
    /// Rows the decision rule ranks over (both groups, exclusions removed).
    pub selection_population: usize,
    pub raters: Vec<String>,
    pub features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IccGate {
    pub threshold: f64,
    pub reference_value: f64,
    pub per_construct: BTreeMap<String, f64>,
    pub dropped_targets: BTreeMap<String, usize>,
    pub mean: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: String,
    pub tool_version: String,
    pub tables: Vec<TableMetadata>,
    pub config: BTreeMap<String, String>,
    pub icc_gate: Option<IccGate>,
    pub summary: Vec<ConstructSummary>,
    pub results: Vec<MetricResult>,
}

impl Default for AuditReport {
    fn default() -> Self {
        Self::new(BTreeMap::new())
    }
}

impl AuditReport {
    pub fn new(config: BTreeMap<String, String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            tables: Vec::new(),
            config,
            icc_gate: None,
            summary: Vec::new(),
            results: Vec::new(),
        }
    }

    /// Adds results and restores (stage, metric, construct) order.
    pub fn extend_results(&mut self, results: impl IntoIterator<Item = MetricResult>) {
        self.results.extend(results);
        self.results.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    }

    pub fn record_icc(&mut self, construct: &str, value: f64, dropped: usize, threshold: f64) {
        let gate = self.icc_gate.get_or_insert_with(|| IccGate {
            threshold,
            reference_value: ICC_REFERENCE,
            per_construct: BTreeMap::new(),
            dropped_targets: BTreeMap::new(),
            mean: None,
            passed: true,
        });
        gate.per_construct.insert(construct.to_string(), value);
        gate.dropped_targets.insert(construct.to_string(), dropped);
        let n = gate.per_construct.len() as f64;
        gate.mean = Some(gate.per_construct.values().sum::<f64>() / n);
        gate.passed = gate.per_construct.values().all(|&v| v >= gate.threshold);
    }

    pub fn count(&self, flag: Flag) -> usize {
        self.results.iter().filter(|r| r.flag == flag).count()
    }

    pub fn has_violation(&self) -> bool {
        self.count(Flag::Violation) > 0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is serializable");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| AuditError::Config(format!("report json: {e}")))
    }

    pub fn to_markdown(&self) -> String {
        render_markdown(self)
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => self.to_json(),
            Format::Markdown => self.to_markdown(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(AuditError::Config(format!("unknown format `{other}`"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Json => "json",
            Format::Markdown => "markdown",
        })
    }
}

/// Two decimals without the leading zero, e.g. `.70`, `-.30`, `1.00`.
pub fn table_number(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = if s == "-0.00" { "0.00".to_string() } else { s };
    if let Some(rest) = s.strip_prefix("0.") {
        format!(".{rest}")
    } else if let Some(rest) = s.strip_prefix("-0.") {
        format!("-.{rest}")
    } else {
        s
    }
}

fn cell_text(c: &Cell) -> String {
    match c.value {
        None => "n/a".to_string(),
        Some(v) if c.flagged => format!("**{}**", table_number(v)),
        Some(v) => table_number(v),
    }
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn render_markdown(r: &AuditReport) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "# Bias and fairness audit\n");
    let _ = writeln!(w, "- Tool: {}", r.tool_version);
    let _ = writeln!(w, "- Schema: {}", r.schema_version);
    let _ = writeln!(
        w,
        "- Flags: {} ok, {} suspect, {} violation, {} undefined",
        r.count(Flag::Ok),
        r.count(Flag::Suspect),
        r.count(Flag::Violation),
        r.count(Flag::Undefined)
    );

    if !r.tables.is_empty() {
        let _ = writeln!(w, "\n## Data\n");
        let _ = writeln!(w, "| Construct | Rows | Group A | n A | Group B | n B | Excluded | Selection population |");
        let _ = writeln!(w, "|---|---|---|---|---|---|---|---|");
        for t in &r.tables {
            let _ = writeln!(
                w,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                md_escape(&t.construct),
                t.n_rows,
                md_escape(&t.group_a),
                t.n_a,
                md_escape(&t.group_b),
                t.n_b,
                t.excluded,
                t.selection_population
            );
        }
        let _ = writeln!(w, "\nDifferences and Cohen's d are group A minus group B.");
    }

    if !r.summary.is_empty() {
        let (a, b) = r
            .tables
            .first()
            .map(|t| (md_escape(&t.group_a), md_escape(&t.group_b)))
            .unwrap_or_else(|| ("A".into(), "B".into()));
        let _ = writeln!(w, "\n## Summary\n");
        let _ = writeln!(
            w,
            "| Construct | Spearman All | {a} | {b} | {a}-{b} | d True | d Pred | True-Pred | AI True | AI Pred |"
        );
        let _ = writeln!(w, "|---|---|---|---|---|---|---|---|---|---|");
        for s in &r.summary {
            let cells: Vec<String> = s.cells().iter().map(|c| cell_text(c)).collect();
            let _ = writeln!(w, "| {} | {} |", md_escape(&s.construct), cells.join(" | "));
        }
        let _ = writeln!(
            w,
            "\nBold Spearman and Cohen's d differences exceed their thresholds; bold adverse impact ratios fall below the four-fifths threshold."
        );
    }

    if let Some(g) = &r.icc_gate {
        let _ = writeln!(w, "\n## Inter-rater reliability\n");
        let _ = writeln!(w, "| Construct | ICC(1,k) | Dropped targets |");
        let _ = writeln!(w, "|---|---|---|");
        for (c, v) in &g.per_construct {
            let dropped = g.dropped_targets.get(c).copied().unwrap_or(0);
            let v = if *v < g.threshold { format!("**{v:.4}**") } else { format!("{v:.4}") };
            let _ = writeln!(w, "| {} | {} | {} |", md_escape(c), v, dropped);
        }
        let mean = g.mean.map_or("n/a".to_string(), |m| format!("{m:.4}"));
        let _ = writeln!(
            w,
            "\nGate {:.2} ({}); mean {}; reference value {:.2}.",
            g.threshold,
            if g.passed { "passed" } else { "failed" },
            mean,
            g.reference_value
        );
    }

    let _ = writeln!(w, "\n## Metrics\n");
    if r.results.is_empty() {
        let _ = writeln!(w, "No metrics computed.");
    } else {
        let _ = writeln!(w, "| Stage | Metric | Construct | Flag | Values | Rationale |");
        let _ = writeln!(w, "|---|---|---|---|---|---|");
        for m in &r.results {
            let flag = if m.flag.is_raised() { format!("**{}**", m.flag) } else { m.flag.to_string() };
            let values: Vec<String> = m
                .values
                .iter()
                .map(|(k, v)| format!("{k}={v:.4}"))
                .chain(m.per_group.iter().map(|(k, v)| format!("{k}={v:.4}")))
                .collect();
            let mut rationale = m.rationale.clone();
            for n in &m.notes {
                let _ = write!(rationale, " ({n})");
            }
            let _ = writeln!(
                w,
                "| {} | {} | {} | {} | {} | {} |",
                m.stage,
                md_escape(&m.metric),
                md_escape(&m.construct),
                flag,
                md_escape(&values.join("; ")),
                md_escape(rationale.trim())
            );
        }
    }

    if !r.config.is_empty() {
        let _ = writeln!(w, "\n## Configuration\n");
        let _ = writeln!(w, "| Key | Value |");
        let _ = writeln!(w, "|---|---|");
        for (k, v) in &r.config {
            let _ = writeln!(w, "| {} | {} |", md_escape(k), md_escape(v));
        }
    }
    out
}
