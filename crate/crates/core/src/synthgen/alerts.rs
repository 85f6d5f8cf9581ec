use rand::Rng;

use super::config::GenConfig;
use super::domain::{AlertState, Category, PreAlert, Risk, Severity};
use super::SynthError;

/// How an alert came to be issued.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Direct,
    PreAlert,
    Escalation,
}

/// Draw `(alert, pre_alert)` for a medium- or high-risk report.
pub fn generate_alert_sequence<R: Rng>(
    category: Category,
    risk: Risk,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<(AlertState, PreAlert), SynthError> {
    generate_alert_sequence_traced(category, risk, cfg, rng).map(|(a, p, _)| (a, p))
}

/// As [`generate_alert_sequence`], also returning the scenario taken.
pub fn generate_alert_sequence_traced<R: Rng>(
    category: Category,
    risk: Risk,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<(AlertState, PreAlert, Scenario), SynthError> {
    if risk == Risk::Low {
        return Err(SynthError::LowRiskAlert);
    }
    let families = category.alert_families();
    let family = families[rng.random_range(0..families.len())];
    let flip = rng.random_bool(cfg.severity_crossover);
    let severity = match (risk, flip) {
        (Risk::Medium, false) | (Risk::High, true) => Severity::Advisory,
        _ => Severity::Warning,
    };
    let alert = AlertState::Active(family, severity);

    let w = cfg.scenario_weights;
    let mut options = vec![(Scenario::Direct, w.direct), (Scenario::PreAlert, w.pre_alert)];
    if severity == Severity::Warning {
        options.push((Scenario::Escalation, w.escalation));
    }
    let total: f64 = options.iter().map(|o| o.1).sum();
    let mut u = rng.random::<f64>() * total;
    let mut scenario = options[options.len() - 1].0;
    for &(s, wt) in &options {
        if u < wt {
            scenario = s;
            break;
        }
        u -= wt;
    }

    let lead = cfg.lead_times[rng.random_range(0..cfg.lead_times.len())];
    let pre = match scenario {
        Scenario::Direct => PreAlert::NONE,
        Scenario::PreAlert => PreAlert {
            kind: alert,
            lead_time: lead,
            severity,
        },
        Scenario::Escalation => PreAlert {
            kind: AlertState::Active(family, Severity::Advisory),
            lead_time: lead,
            severity: Severity::Advisory,
        },
    };
    Ok((alert, pre, scenario))
}
