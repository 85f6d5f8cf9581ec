use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::importance::ImportanceVector;
use super::ExplainError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub agree: usize,
    pub total: usize,
    pub pct: f64,
}

impl Rate {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.agree += usize::from(ok);
        self.pct = 100.0 * self.agree as f64 / self.total as f64;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub strategies: Vec<String>,
    pub overall: Rate,
    pub by_risk: BTreeMap<String, Rate>,
    pub by_category: BTreeMap<String, Rate>,
}

/// Share of samples whose top-1 type is identical under every strategy.
/// `runs` pairs a strategy name with its vectors; all must cover the same ids.
pub fn top1_agreement(runs: &[(String, Vec<ImportanceVector>)]) -> Result<AgreementReport, ExplainError> {
    if runs.len() < 2 {
        return Err(ExplainError::TooFewStrategies(runs.len()));
    }
    let index = |vs: &[ImportanceVector]| -> BTreeMap<u64, usize> {
        vs.iter().enumerate().map(|(i, v)| (v.sample_id, i)).collect()
    };
    let reference = index(&runs[0].1);
    let maps: Vec<BTreeMap<u64, usize>> = runs.iter().map(|(_, vs)| index(vs)).collect();
    for ((name, vs), m) in runs.iter().zip(&maps) {
        if m.len() != vs.len() || !m.keys().eq(reference.keys()) {
            return Err(ExplainError::SampleMismatch {
                strategy: name.clone(),
                reference: runs[0].0.clone(),
            });
        }
    }
    let mut report = AgreementReport {
        strategies: runs.iter().map(|(n, _)| n.clone()).collect(),
        overall: Rate::default(),
        by_risk: BTreeMap::new(),
        by_category: BTreeMap::new(),
    };
    for (&id, &i0) in &reference {
        let first = &runs[0].1[i0];
        let top = first.top1();
        let ok = runs
            .iter()
            .zip(&maps)
            .all(|((_, vs), m)| vs[m[&id]].top1() == top);
        report.overall.add(ok);
        report.by_risk.entry(first.risk.name().to_string()).or_default().add(ok);
        report
            .by_category
            .entry(first.category.name().to_string())
            .or_default()
            .add(ok);
    }
    Ok(report)
}
