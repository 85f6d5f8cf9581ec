//! Constraint-driven synthetic incident reports.
//!
//! Records are built in timestamp order: an alert sequence for medium/high
//! risk, sensors drawn inside the alert's rule range (or risk-graded when
//! there is no alert), then a same-hour consistency clamp against nearby
//! readings. [`validate_dataset`] re-audits the output from field values only.

mod alerts;
mod config;
mod domain;
mod generate;
mod io;
mod sensors;
mod split;
mod temporal;
mod validate;

pub use alerts::{generate_alert_sequence, generate_alert_sequence_traced, Scenario};
pub use config::{default_alert_rules, AlertRule, Gauss, GenConfig, Range, RiskGraded, ScenarioWeights, SeasonalBaseline};
pub use domain::{
    AlertFamily, AlertState, Category, District, Drainage, Gazetteer, PreAlert, ReportRecord, Risk, Season,
    SensorKind, Sensors, Severity,
};
pub use generate::{generate_dataset, generate_dataset_with, generate_timestamp};
pub use io::{metadata_path, read_ndjson, to_ndjson, write_metadata, write_ndjson, DatasetMetadata};
pub use sensors::{generate_constrained_sensors, generate_risk_based_sensors};
pub use split::{split_dataset, Split};
pub use temporal::{consistency_band, enforce_temporal_consistency, TemporalWindow};
pub use validate::{record_verdicts, rule_verdict, validate_dataset, validate_with, AuditReport, RuleAudit};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid risk distribution: {0}")]
    RiskDist(String),
    #[error("nothing to do: empty input or n = 0")]
    Empty,
    #[error("low-risk reports carry no alert; take the (none, none) branch")]
    LowRiskAlert,
    #[error("constrained sensors need an active alert")]
    NoAlert,
    #[error("unknown {field} value {value:?}")]
    Vocabulary { field: &'static str, value: String },
    #[error("unknown district {0:?}")]
    UnknownDistrict(String),
    #[error("stratum ({category}, {risk}) has {size} records; at least 3 are needed to split")]
    SmallStratum { category: Category, risk: Risk, size: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
