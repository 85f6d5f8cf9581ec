use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::config::{default_alert_rules, AlertRule, GenConfig};
use super::domain::{AlertState, ReportRecord, Risk, SensorKind, Severity};
use super::SynthError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleAudit {
    /// Alert state name, e.g. `heavy_rain_warning`.
    pub rule: String,
    pub sensor: SensorKind,
    pub applicable: usize,
    pub satisfied: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub records: usize,
    pub rules: Vec<RuleAudit>,
    pub applicable: usize,
    pub satisfied: usize,
    /// satisfied / applicable in percent; 100 when nothing applies.
    pub overall_pct: f64,
    pub low_risk_with_alert: usize,
    pub season_mismatches: usize,
    pub illegal_pre_alerts: usize,
    pub out_of_bounds: usize,
    /// Ids of records failing their alert rule, first 100.
    pub violating_ids: Vec<u64>,
}

/// Whether the record's governed sensor lies in its alert's range.
/// `None` when the record carries no alert.
pub fn rule_verdict(rec: &ReportRecord, rules: &[AlertRule]) -> Option<bool> {
    let AlertState::Active(family, severity) = rec.alert else {
        return None;
    };
    let Some(rule) = rules.iter().find(|r| r.family == family) else {
        return Some(false);
    };
    Some(
        rule.range(severity)
            .is_some_and(|r| r.contains(rec.sensors.get(rule.sensor))),
    )
}

pub fn record_verdicts(records: &[ReportRecord]) -> Vec<Option<bool>> {
    let rules = default_alert_rules();
    records.iter().map(|r| rule_verdict(r, &rules)).collect()
}

fn pre_alert_legal(rec: &ReportRecord) -> bool {
    let p = &rec.pre_alert;
    if p.kind.severity() != p.severity {
        return false;
    }
    match p.kind {
        AlertState::None => p.lead_time == 0,
        AlertState::Active(f, _) => {
            p.lead_time > 0 && rec.alert.family() == Some(f) && p.severity <= rec.alert.severity()
        }
    }
}

/// Audit records against the alert-weather rules and the structural
/// invariants, using only the records' own field values.
pub fn validate_dataset(records: &[ReportRecord]) -> Result<AuditReport, SynthError> {
    validate_with(records, &GenConfig::default())
}

pub fn validate_with(records: &[ReportRecord], cfg: &GenConfig) -> Result<AuditReport, SynthError> {
    if records.is_empty() {
        return Err(SynthError::Empty);
    }
    let mut rules: Vec<RuleAudit> = cfg
        .alert_rules
        .iter()
        .flat_map(|r| {
            [Severity::Advisory, Severity::Warning].map(|s| RuleAudit {
                rule: AlertState::Active(r.family, s).name(),
                sensor: r.sensor,
                applicable: 0,
                satisfied: 0,
            })
        })
        .collect();
    let mut report = AuditReport {
        records: records.len(),
        rules: Vec::new(),
        applicable: 0,
        satisfied: 0,
        overall_pct: 100.0,
        low_risk_with_alert: 0,
        season_mismatches: 0,
        illegal_pre_alerts: 0,
        out_of_bounds: 0,
        violating_ids: Vec::new(),
    };
    for rec in records {
        if let Some(ok) = rule_verdict(rec, &cfg.alert_rules) {
            let name = rec.alert.name();
            if let Some(r) = rules.iter_mut().find(|r| r.rule == name) {
                r.applicable += 1;
                r.satisfied += usize::from(ok);
            }
            report.applicable += 1;
            report.satisfied += usize::from(ok);
            if !ok && report.violating_ids.len() < 100 {
                report.violating_ids.push(rec.id);
            }
        }
        if rec.risk == Risk::Low && (rec.alert != AlertState::None || rec.pre_alert.kind != AlertState::None) {
            report.low_risk_with_alert += 1;
        }
        if !rec.category.season().months().contains(&rec.timestamp.month()) || rec.season != rec.category.season() {
            report.season_mismatches += 1;
        }
        if !pre_alert_legal(rec) {
            report.illegal_pre_alerts += 1;
        }
        if SensorKind::ALL
            .iter()
            .any(|&k| !cfg.bound(k).contains(rec.sensors.get(k)))
        {
            report.out_of_bounds += 1;
        }
    }
    if report.applicable > 0 {
        report.overall_pct = 100.0 * report.satisfied as f64 / report.applicable as f64;
    }
    report.rules = rules;
    Ok(report)
}
