//! Deterministic synthetic audit tables with injectable bias.
//!
//! Each subject draws a latent construct value `t ~ N(mean_g, 1)`. Ground
//! truth adds channel noise to `t`; predictions scale the deviation of `t`
//! from the scale midpoint by `prediction_slope` (and by
//! `deficiency_attenuation_b` in group B, removing construct-relevant
//! variance), then add `contamination_shift_b` in group B
//! (construct-irrelevant variance) and prediction noise. Raters observe
//! ground truth with independent noise. Feature `f_1` carries
//! `leaky_feature_weight` times the group-B indicator; all features carry
//! `feature_signal_weight` times the centred latent value plus unit noise.
//!
//! Subjects alternate A, B, A, B, ... and every value is rounded to four
//! decimals before clamping to the scale, so CSV output round-trips
//! exactly.

use serde::{Deserialize, Serialize};

use crate::data::{AuditTable, ColumnRoles, ScoreScale, SubjectRecord};
use crate::error::{AuditError, Result};
use crate::rng::CounterRng;

const DECIMALS: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_per_group: usize,
    pub group_a_label: String,
    pub group_b_label: String,
    pub construct: String,
    pub scale: ScoreScale,
    pub latent_mean_a: f64,
    pub latent_mean_b: f64,
    pub noise_sd: f64,
    pub prediction_slope: f64,
    pub contamination_shift_b: f64,
    pub deficiency_attenuation_b: f64,
    pub n_raters: usize,
    pub rater_noise_sd: f64,
    pub n_features: usize,
    pub feature_signal_weight: f64,
    pub leaky_feature_weight: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_per_group: 2000,
            group_a_label: "a".into(),
            group_b_label: "b".into(),
            construct: "construct".into(),
            scale: ScoreScale::default(),
            latent_mean_a: 4.0,
            latent_mean_b: 4.0,
            noise_sd: 0.3,
            prediction_slope: 1.0,
            contamination_shift_b: 0.0,
            deficiency_attenuation_b: 1.0,
            n_raters: 3,
            rater_noise_sd: 0.5,
            n_features: 3,
            feature_signal_weight: 0.5,
            leaky_feature_weight: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AuditError::InvalidSpec(m));
        ScoreScale::new(self.scale.min, self.scale.max, self.scale.higher_is_better)
            .map_err(|e| AuditError::InvalidSpec(e.to_string()))?;
        if self.n_per_group < 2 {
            return bad(format!("n_per_group must be at least 2, got {}", self.n_per_group));
        }
        if self.group_a_label == self.group_b_label {
            return bad("group labels must differ".into());
        }
        for (name, v) in [("noise_sd", self.noise_sd), ("rater_noise_sd", self.rater_noise_sd)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.deficiency_attenuation_b > 0.0 && self.deficiency_attenuation_b <= 1.0) {
            return bad(format!(
                "deficiency_attenuation_b must lie in (0, 1], got {}",
                self.deficiency_attenuation_b
            ));
        }
        let finite = [
            self.latent_mean_a,
            self.latent_mean_b,
            self.prediction_slope,
            self.contamination_shift_b,
            self.feature_signal_weight,
            self.leaky_feature_weight,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }
}

/// Number of values pushed onto a scale bound, per column family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampCounts {
    pub truth: usize,
    pub pred: usize,
    pub ratings: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesized {
    pub table: AuditTable,
    pub clamped: ClampCounts,
}

fn round4(x: f64) -> f64 {
    (x * DECIMALS).round() / DECIMALS
}

pub fn generate(spec: &SynthSpec) -> Result<Synthesized> {
    spec.validate()?;
    let mut rng = CounterRng::new(spec.seed);
    let scale = spec.scale;
    let center = scale.midpoint();
    let clamp = |v: f64, counter: &mut usize| {
        let c = scale.clamp(round4(v));
        if c != round4(v) {
            *counter += 1;
        }
        c
    };
    let mut truth_clamps = 0;
    let mut pred_clamps = 0;
    let mut rating_clamps = 0;

    let n = 2 * spec.n_per_group;
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let in_b = i % 2 == 1;
        let (label, mean) = if in_b {
            (&spec.group_b_label, spec.latent_mean_b)
        } else {
            (&spec.group_a_label, spec.latent_mean_a)
        };
        let t = rng.normal(mean, 1.0);
        let y_true = clamp(t + rng.normal(0.0, spec.noise_sd), &mut truth_clamps);
        let (atten, shift) = if in_b {
            (spec.deficiency_attenuation_b, spec.contamination_shift_b)
        } else {
            (1.0, 0.0)
        };
        let signal = center + spec.prediction_slope * atten * (t - center);
        let y_pred = clamp(signal + shift + rng.normal(0.0, spec.noise_sd), &mut pred_clamps);
        let ratings = (0..spec.n_raters)
            .map(|_| Some(clamp(y_true + rng.normal(0.0, spec.rater_noise_sd), &mut rating_clamps)))
            .collect();
        let features = (0..spec.n_features)
            .map(|j| {
                let leak = if j == 0 && in_b { spec.leaky_feature_weight } else { 0.0 };
                Some(round4(spec.feature_signal_weight * (t - center) + leak + rng.next_normal()))
            })
            .collect();
        records.push(SubjectRecord {
            subject_id: format!("s{:05}", i + 1),
            group: label.clone(),
            y_true,
            y_pred,
            ratings,
            features,
        });
    }
    let clamped = ClampCounts { truth: truth_clamps, pred: pred_clamps, ratings: rating_clamps };

    let roles = ColumnRoles { construct: spec.construct.clone(), ..ColumnRoles::default() };
    let rater_names = (1..=spec.n_raters).map(|j| format!("{}{j}", roles.rater_prefix)).collect();
    let feature_names = (1..=spec.n_features).map(|j| format!("{}{j}", roles.feature_prefix)).collect();
    let table = AuditTable::new(records, scale, roles, rater_names, feature_names)?;
    Ok(Synthesized { table, clamped })
}
