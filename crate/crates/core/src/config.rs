//! Configuration files for audits and synthetic tables.
//!
//! The native format is flat `key = value` text:
//!
//! ```text
//! file    := line*
//! line    := blank | '#' comment | key '=' value
//! key     := [A-Za-z0-9_.-]+
//! value   := rest of the line, trimmed; one pair of surrounding
//!            double quotes is removed
//! ```
//!
//! Duplicate keys are errors. A file whose first non-blank character is
//! `{` is read as a JSON object carrying the same keys; nested objects are
//! flattened with `.` (so `{"epsilon": {"equal_opportunity": 0.1}}` sets
//! `epsilon.equal_opportunity`) and arrays are joined with commas.
//!
//! Unknown keys are rejected. Later layers override earlier ones: built-in
//! defaults, then the config file, then command-line flags.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::data::{ColumnRoles, ScoreScale};
use crate::decision::{DecisionSpec, K_ROUNDING, TIE_BREAK};
use crate::error::{AuditError, Result};
use crate::report::{FlagThresholds, Format};
use crate::synth::SynthSpec;

pub type KeyValues = BTreeMap<String, String>;

fn cfg_err(msg: impl Into<String>) -> AuditError {
    AuditError::Config(msg.into())
}

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    if text.trim_start().starts_with('{') {
        return parse_json_object(text);
    }
    let mut out = KeyValues::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {}: expected `key = value`", n + 1)))?;
        let key = key.trim();
        if key.is_empty()
            || !key.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
        {
            return Err(cfg_err(format!("line {}: invalid key `{key}`", n + 1)));
        }
        let mut value = value.trim();
        if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
            value = &value[1..value.len() - 1];
        }
        if out.insert(key.to_string(), value.to_string()).is_some() {
            return Err(cfg_err(format!("line {}: duplicate key `{key}`", n + 1)));
        }
    }
    Ok(out)
}

fn parse_json_object(text: &str) -> Result<KeyValues> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| cfg_err(format!("json: {e}")))?;
    let serde_json::Value::Object(map) = v else {
        return Err(cfg_err("json config must be an object"));
    };
    let mut out = KeyValues::new();
    flatten("", &map, &mut out)?;
    Ok(out)
}

fn flatten(prefix: &str, map: &serde_json::Map<String, serde_json::Value>, out: &mut KeyValues) -> Result<()> {
    use serde_json::Value;
    fn scalar(v: &Value) -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            Value::Bool(b) => Ok(b.to_string()),
            Value::Null => Ok(String::new()),
            Value::Array(items) => Ok(items.iter().map(scalar).collect::<Result<Vec<_>>>()?.join(",")),
            Value::Object(_) => Err(cfg_err("nested object inside array")),
        }
    }
    for (k, v) in map {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Object(inner) => flatten(&key, inner, out)?,
            other => {
                out.insert(key, scalar(other)?);
            }
        }
    }
    Ok(())
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.trim().parse().map_err(|_| cfg_err(format!("`{key}`: `{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(cfg_err(format!("`{key}`: must be finite")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim().parse().map_err(|_| cfg_err(format!("`{key}`: `{v}` is not a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(cfg_err(format!("`{key}`: `{v}` is not a boolean"))),
    }
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

pub fn parse_rates(v: &str) -> Result<Vec<f64>> {
    parse_list(v).iter().map(|r| parse_f64("rates", r)).collect()
}

/// Effective configuration of an `audit`, `sweep` or `screen` run.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    pub input: Option<PathBuf>,
    pub roles: ColumnRoles,
    pub scale: ScoreScale,
    /// Reference group A and focal group B; alphabetical when unset.
    pub groups: Option<(String, String)>,
    pub decision: DecisionSpec,
    pub overrides: BTreeMap<String, DecisionSpec>,
    pub thresholds: FlagThresholds,
    pub strata_col: Option<String>,
    /// `None` means "the group column only".
    pub forbidden: Option<Vec<String>>,
    pub format: Format,
    pub gate: bool,
    pub sweep_rates: Vec<f64>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            input: None,
            roles: ColumnRoles::default(),
            scale: ScoreScale::default(),
            groups: None,
            decision: DecisionSpec::top_k_rate(0.1).expect("valid default rate"),
            overrides: BTreeMap::new(),
            thresholds: FlagThresholds::default(),
            strata_col: None,
            forbidden: None,
            format: Format::Markdown,
            gate: false,
            sweep_rates: vec![0.05, 0.1, 0.2, 0.3, 0.5],
        }
    }
}

impl AuditConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply(&parse_key_values(text)?)?;
        Ok(c)
    }

    /// Applies one layer of settings over the current values.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        for (key, v) in kv {
            let t = &mut self.thresholds;
            match key.as_str() {
                "input" => self.input = Some(PathBuf::from(v)),
                "construct" => self.roles.construct = v.clone(),
                "subject_col" => self.roles.subject = v.clone(),
                "group_col" => self.roles.group = v.clone(),
                "truth_col" => self.roles.truth = v.clone(),
                "pred_col" => self.roles.pred = v.clone(),
                "rater_prefix" => self.roles.rater_prefix = v.clone(),
                "feature_prefix" => self.roles.feature_prefix = v.clone(),
                "scale_min" => self.scale.min = parse_f64(key, v)?,
                "scale_max" => self.scale.max = parse_f64(key, v)?,
                "higher_is_better" => self.scale.higher_is_better = parse_bool(key, v)?,
                "groups" => {
                    let g = parse_list(v);
                    let [a, b] = g.as_slice() else {
                        return Err(cfg_err(format!("`groups`: expected `A,B`, got `{v}`")));
                    };
                    self.groups = Some((a.clone(), b.clone()));
                }
                "decision" => self.decision = v.parse()?,
                "select_rate" => self.decision = DecisionSpec::top_k_rate(parse_f64(key, v)?)?,
                "threshold" => self.decision = DecisionSpec::threshold(parse_f64(key, v)?)?,
                "rho_diff_threshold" => t.rho_diff = parse_f64(key, v)?,
                "effect_size_threshold" => t.effect_size = parse_f64(key, v)?,
                "ai_threshold" => t.adverse_impact = parse_f64(key, v)?,
                "sd_ratio_threshold" => t.sd_ratio = parse_f64(key, v)?,
                "epsilon" => t.epsilon = parse_f64(key, v)?,
                "leakage_threshold" => t.leakage = parse_f64(key, v)?,
                "icc_gate" => t.icc_gate = parse_f64(key, v)?,
                "dif_threshold" => t.dif = parse_f64(key, v)?,
                "strata_col" => self.strata_col = (!v.trim().is_empty()).then(|| v.trim().to_string()),
                "forbidden" => self.forbidden = Some(parse_list(v)),
                "format" => self.format = v.parse()?,
                "gate" => self.gate = parse_bool(key, v)?,
                "sweep_rates" => self.sweep_rates = parse_rates(v)?,
                other => {
                    if let Some(metric) = other.strip_prefix("epsilon.") {
                        t.epsilon_overrides.insert(metric.to_string(), parse_f64(key, v)?);
                    } else if let Some(group) = other.strip_prefix("override.") {
                        self.overrides.insert(group.to_string(), v.parse()?);
                    } else {
                        return Err(cfg_err(format!("unknown key `{other}`")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        ScoreScale::new(self.scale.min, self.scale.max, self.scale.higher_is_better)?;
        self.thresholds.validate()?;
        if let Some((a, b)) = &self.groups {
            if a == b {
                return Err(AuditError::IdenticalGroups(a.clone()));
            }
        }
        for r in &self.sweep_rates {
            DecisionSpec::top_k_rate(*r)?;
        }
        Ok(())
    }

    pub fn forbidden_columns(&self) -> Vec<String> {
        self.forbidden.clone().unwrap_or_else(|| vec![self.roles.group.clone()])
    }

    /// Every effective setting, in the config-file key vocabulary.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let t = &self.thresholds;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        if let Some(p) = &self.input {
            put("input", p.display().to_string());
        }
        put("construct", self.roles.construct.clone());
        put("subject_col", self.roles.subject.clone());
        put("group_col", self.roles.group.clone());
        put("truth_col", self.roles.truth.clone());
        put("pred_col", self.roles.pred.clone());
        put("rater_prefix", self.roles.rater_prefix.clone());
        put("feature_prefix", self.roles.feature_prefix.clone());
        put("scale_min", self.scale.min.to_string());
        put("scale_max", self.scale.max.to_string());
        put("higher_is_better", self.scale.higher_is_better.to_string());
        if let Some((a, b)) = &self.groups {
            put("groups", format!("{a},{b}"));
        }
        put("decision", self.decision.to_string());
        put("tie_break", TIE_BREAK.to_string());
        put("k_rounding", K_ROUNDING.to_string());
        put("rho_diff_threshold", t.rho_diff.to_string());
        put("effect_size_threshold", t.effect_size.to_string());
        put("ai_threshold", t.adverse_impact.to_string());
        put("sd_ratio_threshold", t.sd_ratio.to_string());
        put("epsilon", t.epsilon.to_string());
        for (metric, e) in &t.epsilon_overrides {
            put(&format!("epsilon.{metric}"), e.to_string());
        }
        put("leakage_threshold", t.leakage.to_string());
        put("icc_gate", t.icc_gate.to_string());
        put("dif_threshold", t.dif.to_string());
        if let Some(s) = &self.strata_col {
            put("strata_col", s.clone());
        }
        put("forbidden", self.forbidden_columns().join(","));
        for (g, r) in &self.overrides {
            put(&format!("override.{g}"), r.to_string());
        }
        put("gate", self.gate.to_string());
        put(
            "sweep_rates",
            self.sweep_rates.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(","),
        );
        m
    }
}

impl SynthSpec {
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let mut s = SynthSpec::default();
        for (key, v) in &kv {
            match key.as_str() {
                "seed" => {
                    s.seed = v.trim().parse().map_err(|_| cfg_err(format!("`seed`: `{v}` is not a u64")))?
                }
                "n_per_group" => s.n_per_group = parse_usize(key, v)?,
                "group_a" => s.group_a_label = v.clone(),
                "group_b" => s.group_b_label = v.clone(),
                "construct" => s.construct = v.clone(),
                "scale_min" => s.scale.min = parse_f64(key, v)?,
                "scale_max" => s.scale.max = parse_f64(key, v)?,
                "higher_is_better" => s.scale.higher_is_better = parse_bool(key, v)?,
                "latent_mean_a" => s.latent_mean_a = parse_f64(key, v)?,
                "latent_mean_b" => s.latent_mean_b = parse_f64(key, v)?,
                "noise_sd" => s.noise_sd = parse_f64(key, v)?,
                "prediction_slope" => s.prediction_slope = parse_f64(key, v)?,
                "contamination_shift_b" => s.contamination_shift_b = parse_f64(key, v)?,
                "deficiency_attenuation_b" => s.deficiency_attenuation_b = parse_f64(key, v)?,
                "n_raters" => s.n_raters = parse_usize(key, v)?,
                "rater_noise_sd" => s.rater_noise_sd = parse_f64(key, v)?,
                "n_features" => s.n_features = parse_usize(key, v)?,
                "feature_signal_weight" => s.feature_signal_weight = parse_f64(key, v)?,
                "leaky_feature_weight" => s.leaky_feature_weight = parse_f64(key, v)?,
                other => return Err(cfg_err(format!("unknown key `{other}`"))),
            }
        }
        s.validate()?;
        Ok(s)
    }
}
