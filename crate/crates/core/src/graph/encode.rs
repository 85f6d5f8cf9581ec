use serde::{Deserialize, Serialize};

use super::schema::NodeType;
use super::GraphError;
use crate::synthgen::{AlertState, Category, Drainage, Gazetteer, Range, ReportRecord, SensorKind, Severity};

/// Per-sensor bin boundaries and normalization scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorQuantizer {
    pub sensor: SensorKind,
    /// Four strictly increasing interior boundaries (five bins).
    pub boundaries: [f64; 4],
    pub scale: Range,
}

impl SensorQuantizer {
    /// `v < b0` -> 0, `b0 <= v < b1` -> 1, ..., `v >= b3` -> 4.
    pub fn bin(&self, v: f64) -> usize {
        self.boundaries.iter().take_while(|&&b| v >= b).count()
    }

    pub fn normalize(&self, v: f64) -> f64 {
        ((v - self.scale.lo) / self.scale.width()).clamp(0.0, 1.0)
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        self.scale.lo + x * self.scale.width()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantizers {
    /// Indexed by [`SensorKind`].
    pub sensors: Vec<SensorQuantizer>,
}

impl Quantizers {
    pub fn get(&self, k: SensorKind) -> &SensorQuantizer {
        &self.sensors[k.index()]
    }
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn strictly_increasing(b: &[f64; 4]) -> bool {
    b.windows(2).all(|w| w[0] < w[1])
}

const QUINTILES: [f64; 4] = [0.2, 0.4, 0.6, 0.8];

/// Fit 20/40/60/80 percentile boundaries per sensor from training values.
/// Sensors with a heavy point mass (e.g. snowfall outside winter) fall back to
/// percentiles of their distinct values.
pub fn fit_quantizers(train: &[ReportRecord], bounds: &[Range; 7]) -> Result<Quantizers, GraphError> {
    let mut sensors = Vec::with_capacity(7);
    for &k in SensorKind::ALL {
        let mut vals: Vec<f64> = train.iter().map(|r| r.sensors.get(k)).collect();
        vals.sort_by(f64::total_cmp);
        let mut distinct = vals.clone();
        distinct.dedup();
        if distinct.len() < 5 {
            return Err(GraphError::DegenerateSensor {
                sensor: k,
                distinct: distinct.len(),
            });
        }
        let mut b = QUINTILES.map(|p| percentile(&vals, p));
        if !strictly_increasing(&b) {
            b = QUINTILES.map(|p| percentile(&distinct, p));
        }
        if !strictly_increasing(&b) {
            return Err(GraphError::DegenerateSensor {
                sensor: k,
                distinct: distinct.len(),
            });
        }
        sensors.push(SensorQuantizer {
            sensor: k,
            boundaries: b,
            scale: bounds[k.index()],
        });
    }
    Ok(Quantizers { sensors })
}

/// Raw value of one node before encoding.
#[derive(Clone, Debug, PartialEq)]
pub enum RawValue<'a> {
    Sensor(f64),
    Alert(AlertState),
    LeadTime(u32),
    Severity(Severity),
    Drainage(Drainage),
    District(&'a str),
    Count(u32),
    Category(Category),
    Report,
}

pub fn lead_time_bin(hours: u32) -> usize {
    match hours {
        0..=1 => 0,
        2 => 1,
        3 => 2,
        4..=6 => 3,
        7..=12 => 4,
        _ => 5,
    }
}

pub fn report_count_bin(n: u32) -> usize {
    match n {
        0 => 0,
        1..=2 => 1,
        3..=5 => 2,
        6..=10 => 3,
        _ => 4,
    }
}

fn one_hot(n: usize, hot: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[hot] = 1.0;
    v
}

fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((la2 - la1) / 2.0).sin().powi(2) + la1.cos() * la2.cos() * ((lo2 - lo1) / 2.0).sin().powi(2);
    2.0 * 6371.0 * h.sqrt().asin()
}

/// `[lat_norm, lon_norm, region / 2, distance_to_center / max_distance]`,
/// normalized over the gazetteer's extent.
pub fn location_features(gaz: &Gazetteer, name: &str) -> Result<[f64; 4], GraphError> {
    let d = gaz
        .districts
        .iter()
        .find(|d| d.name == name)
        .ok_or_else(|| GraphError::UnknownDistrict(name.to_string()))?;
    let span = |f: fn(&crate::synthgen::District) -> f64| {
        let lo = gaz.districts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = gaz.districts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(1e-12))
    };
    let (lat0, lat_w) = span(|d| d.lat);
    let (lon0, lon_w) = span(|d| d.lon);
    let max_dist = gaz
        .districts
        .iter()
        .map(|x| haversine_km((x.lat, x.lon), gaz.center))
        .fold(0.0, f64::max)
        .max(1e-12);
    Ok([
        (d.lat - lat0) / lat_w,
        (d.lon - lon0) / lon_w,
        f64::from(d.region) / 2.0,
        haversine_km((d.lat, d.lon), gaz.center) / max_dist,
    ])
}

/// Feature row for one node.
pub fn encode_node(t: NodeType, raw: &RawValue<'_>, q: &Quantizers, gaz: &Gazetteer) -> Result<Vec<f64>, GraphError> {
    let mismatch = || GraphError::Encode(format!("{raw:?} is not a value of node type {t}"));
    match (t, raw) {
        (t, RawValue::Sensor(v)) if t.is_sensor() => {
            if !v.is_finite() {
                return Err(GraphError::Encode(format!("{t}: non-finite value {v}")));
            }
            let sq = q.get(t.sensor().expect("sensor"));
            let mut out = one_hot(5, sq.bin(*v));
            out.push(sq.normalize(*v));
            Ok(out)
        }
        (NodeType::WeatherAlert | NodeType::PreAlertType, RawValue::Alert(a)) => {
            if matches!(a, AlertState::Active(_, Severity::None)) {
                return Err(GraphError::Encode(format!("alert state {a:?} has no severity")));
            }
            Ok(one_hot(AlertState::COUNT, a.index()))
        }
        (NodeType::PreAlertTime, RawValue::LeadTime(h)) => Ok(one_hot(6, lead_time_bin(*h))),
        (NodeType::PreAlertSeverity, RawValue::Severity(s)) => Ok(one_hot(3, s.index())),
        (NodeType::Drainage, RawValue::Drainage(d)) => Ok(one_hot(3, d.index())),
        (NodeType::Location, RawValue::District(name)) => Ok(location_features(gaz, name)?.to_vec()),
        (NodeType::ReportCount, RawValue::Count(n)) => Ok(one_hot(5, report_count_bin(*n))),
        (NodeType::ReportType, RawValue::Category(c)) => Ok(vec![c.index() as f64]),
        (NodeType::Report, RawValue::Report) => Ok(vec![1.0]),
        _ => Err(mismatch()),
    }
}

/// Raw value a record contributes to neighbor type `t`.
pub fn raw_value(rec: &ReportRecord, t: NodeType) -> RawValue<'_> {
    match t {
        t if t.is_sensor() => RawValue::Sensor(rec.sensors.get(t.sensor().expect("sensor"))),
        NodeType::WeatherAlert => RawValue::Alert(rec.alert),
        NodeType::PreAlertType => RawValue::Alert(rec.pre_alert.kind),
        NodeType::PreAlertTime => RawValue::LeadTime(rec.pre_alert.lead_time),
        NodeType::PreAlertSeverity => RawValue::Severity(rec.pre_alert.severity),
        NodeType::Drainage => RawValue::Drainage(rec.drainage),
        NodeType::Location => RawValue::District(&rec.location),
        NodeType::ReportCount => RawValue::Count(rec.colocated_count),
        NodeType::ReportType => RawValue::Category(rec.category),
        _ => RawValue::Report,
    }
}
