use std::collections::BTreeMap;

use chrono::NaiveDateTime;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::AnchorError;
use crate::synthgen::{AlertState, Category, Drainage, PreAlert, Range, ReportRecord, Risk, SensorKind, Sensors};

/// Non-sensor fields drawn together so that risk, alert and pre-alert stay
/// mutually consistent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub risk: Risk,
    pub alert: AlertState,
    pub pre_alert: PreAlert,
    pub drainage: Drainage,
}

/// Per-category generator: diagonal Gaussian over sensors plus empirical
/// frequencies of the categorical fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub category: Category,
    pub mean: [f64; 7],
    pub var: [f64; 7],
    pub bounds: [Range; 7],
    pub contexts: Vec<(Context, u32)>,
    pub locations: Vec<(String, u32)>,
    pub colocated: Vec<(u32, u32)>,
    /// Median training timestamp of the category.
    pub timestamp: NaiveDateTime,
}

fn counts<K: Ord + Clone>(items: impl Iterator<Item = K>) -> Vec<(K, u32)> {
    let mut m: BTreeMap<K, u32> = BTreeMap::new();
    for k in items {
        *m.entry(k).or_default() += 1;
    }
    m.into_iter().collect()
}

pub fn fit_prototype(train: &[ReportRecord], c: Category, bounds: &[Range; 7]) -> Result<Prototype, AnchorError> {
    let recs: Vec<&ReportRecord> = train.iter().filter(|r| r.category == c).collect();
    if recs.is_empty() {
        return Err(AnchorError::EmptyCategory(c));
    }
    let n = recs.len() as f64;
    let mut mean = [0.0; 7];
    let mut var = [0.0; 7];
    for &k in SensorKind::ALL {
        let i = k.index();
        mean[i] = recs.iter().map(|r| r.sensors.get(k)).sum::<f64>() / n;
        var[i] = recs.iter().map(|r| (r.sensors.get(k) - mean[i]).powi(2)).sum::<f64>() / n;
    }
    // Context is not Ord; key it by its JSON form.
    let mut ctx: BTreeMap<String, (Context, u32)> = BTreeMap::new();
    for r in &recs {
        let c = Context {
            risk: r.risk,
            alert: r.alert,
            pre_alert: r.pre_alert,
            drainage: r.drainage,
        };
        let key = serde_json::to_string(&c)?;
        ctx.entry(key).or_insert((c, 0)).1 += 1;
    }
    let mut times: Vec<NaiveDateTime> = recs.iter().map(|r| r.timestamp).collect();
    times.sort();
    Ok(Prototype {
        category: c,
        mean,
        var,
        bounds: *bounds,
        contexts: ctx.into_values().collect(),
        locations: counts(recs.iter().map(|r| r.location.clone())),
        colocated: counts(recs.iter().map(|r| r.colocated_count)),
        timestamp: times[times.len() / 2],
    })
}

fn pick<'a, T, R: Rng + ?Sized>(table: &'a [(T, u32)], rng: &mut R) -> Result<&'a T, AnchorError> {
    let w = WeightedIndex::new(table.iter().map(|(_, n)| *n)).map_err(|e| AnchorError::Prototype(e.to_string()))?;
    Ok(&table[w.sample(rng)].0)
}

/// One synthetic anchor record, drawn fresh on every call.
pub fn build_synthetic_anchor<R: Rng + ?Sized>(p: &Prototype, id: u64, rng: &mut R) -> Result<ReportRecord, AnchorError> {
    let mut sensors = Sensors::default();
    for &k in SensorKind::ALL {
        let i = k.index();
        let z: f64 = rng.sample(StandardNormal);
        let b = p.bounds[i];
        sensors.set(k, (p.mean[i] + p.var[i].sqrt() * z).clamp(b.lo, b.hi));
    }
    let ctx = pick(&p.contexts, rng)?.clone();
    Ok(ReportRecord {
        id,
        timestamp: p.timestamp,
        category: p.category,
        season: p.category.season(),
        location: pick(&p.locations, rng)?.clone(),
        sensors,
        alert: ctx.alert,
        pre_alert: ctx.pre_alert,
        drainage: ctx.drainage,
        colocated_count: *pick(&p.colocated, rng)?,
        risk: ctx.risk,
    })
}
