//! Deterministic bias and fairness auditing for scored assessments.
//!
//! The crate ingests ground-truth scores, model predictions, group labels,
//! annotator ratings and features, then computes a suite of stage-tagged
//! metrics (feature, prediction, decision and ground-truth stages) and
//! assembles them into a flagged [`AuditReport`].
//!
//! Statistical kernels are generic over the scalar type through
//! [`Scalar`]; the aliases at the crate root fix them to `f64`, which is
//! the precision the data model stores.

pub mod audit;
pub mod classification;
pub mod config;
pub mod data;
pub mod decision;
pub mod effect;
pub mod error;
pub mod rank;
pub mod reliability;
pub mod report;
pub mod rng;
pub mod scalar;
pub mod screen;
pub mod synth;

pub use audit::{resolve_partition, run_audit, run_screen};
pub use classification::ConfusionMatrix;
pub use config::AuditConfig;
pub use data::{
    load_audit_table, partition, AuditTable, ColumnRoles, GroupPartition, ScoreScale,
    SubjectRecord,
};

pub use decision::{DecisionMode, DecisionSpec};
pub use error::{AuditError, Result};
pub use report::{AuditReport, Flag, FlagThresholds, Format, MetricResult, Stage};

pub use scalar::Scalar;
pub use synth::{generate, SynthSpec};

/// Storage precision of every score in an [`AuditTable`].
pub type Real = f64;

pub type CorrelationReport = rank::CorrelationReport<Real>;
pub type EffectSizeReport = effect::EffectSizeReport<Real>;
pub type RangeRestriction = effect::RangeRestriction<Real>;
pub type AnnotationMatrix = reliability::AnnotationMatrix<Real>;
pub type ItemRestRecord = reliability::ItemRestRecord<Real>;
pub type GroupRates = classification::GroupRates<Real>;
pub type AdverseImpactResult = decision::AdverseImpactResult<Real>;
pub type LeakageReport = screen::LeakageReport<Real>;

/// Version string stamped into every report.
pub const TOOL_VERSION: &str = concat!("fairscope ", env!("CARGO_PKG_VERSION"));
