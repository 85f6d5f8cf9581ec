use std::collections::{BTreeMap, VecDeque};

use chrono::{NaiveDateTime, TimeDelta, Timelike};

use super::config::{GenConfig, Range};
use super::domain::{Gazetteer, SensorKind, Sensors};
use super::SynthError;

/// Trailing 24 hours of readings per (district, sensor kind).
#[derive(Clone, Debug, Default)]
pub struct TemporalWindow {
    /// District index -> region code.
    regions: Vec<u8>,
    rings: BTreeMap<(usize, SensorKind), VecDeque<(NaiveDateTime, f64)>>,
}

fn same_hour(a: NaiveDateTime, b: NaiveDateTime) -> bool {
    a.date() == b.date() && a.hour() == b.hour()
}

impl TemporalWindow {
    pub fn new(gazetteer: &Gazetteer) -> Self {
        Self {
            regions: gazetteer.districts.iter().map(|d| d.region).collect(),
            rings: BTreeMap::new(),
        }
    }

    pub fn ring(&self, district: usize, kind: SensorKind) -> Option<&VecDeque<(NaiveDateTime, f64)>> {
        self.rings.get(&(district, kind))
    }

    pub fn rings(&self) -> impl Iterator<Item = (&(usize, SensorKind), &VecDeque<(NaiveDateTime, f64)>)> {
        self.rings.iter()
    }

    /// Readings at `at` or earlier in the same clock hour, at `district` or
    /// any district in its region.
    pub fn references(&self, district: usize, kind: SensorKind, at: NaiveDateTime) -> Vec<f64> {
        let Some(&region) = self.regions.get(district) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for (d, _) in self.regions.iter().enumerate().filter(|(_, &r)| r == region) {
            let Some(ring) = self.rings.get(&(d, kind)) else {
                continue;
            };
            for &(ts, v) in ring.iter().rev() {
                if ts > at {
                    continue;
                }
                if !same_hour(ts, at) {
                    break;
                }
                out.push(v);
            }
        }
        out
    }

    /// Append a reading and drop entries older than 24 h before the newest.
    pub fn push(&mut self, district: usize, kind: SensorKind, at: NaiveDateTime, value: f64) {
        let ring = self.rings.entry((district, kind)).or_default();
        let pos = ring.partition_point(|&(ts, _)| ts <= at);
        ring.insert(pos, (at, value));
        let newest = ring.back().expect("just pushed").0;
        let cutoff = newest - TimeDelta::hours(24);
        while ring.front().is_some_and(|&(ts, _)| ts < cutoff) {
            ring.pop_front();
        }
    }
}

fn gap(a: &Range, b: &Range) -> f64 {
    (a.lo - b.hi).max(b.lo - a.hi).max(0.0)
}

/// Band a value may occupy given a reference reading.
pub fn consistency_band(reference: f64, sigma: f64, bounds: Range) -> Range {
    let scale = bounds.width();
    let half = if reference.abs() < 1e-6 * scale {
        sigma * scale
    } else {
        sigma * reference.abs()
    };
    let band = Range::new(reference - half, reference + half);
    band.intersect(&bounds).unwrap_or(band)
}

/// Pull each sensor into ±`sigma` of a same-hour reference reading and record
/// the result in `window`. With several references the one nearest the
/// candidate value (or the governed alert range) is used.
///
/// `governed` names the sensor an active alert constrains and its rule range.
/// When that range overlaps the band the value is kept inside both;
/// otherwise the band wins.
pub fn enforce_temporal_consistency(
    sensors: &Sensors,
    district: usize,
    at: NaiveDateTime,
    window: &mut TemporalWindow,
    sigma: f64,
    cfg: &GenConfig,
    governed: Option<(SensorKind, Range)>,
) -> Result<Sensors, SynthError> {
    if !(sigma > 0.0) {
        return Err(SynthError::Config(format!("sigma must be > 0, got {sigma}")));
    }
    let mut out = *sensors;
    for &k in SensorKind::ALL {
        let v = sensors.get(k);
        let wanted = match governed {
            Some((gk, r)) if gk == k => r,
            _ => Range::new(v, v),
        };
        // Among same-hour references, follow the one whose band sits closest
        // to what the report needs.
        let best = window
            .references(district, k, at)
            .into_iter()
            .map(|r| consistency_band(r, sigma, cfg.bound(k)))
            .min_by(|a, b| gap(a, &wanted).total_cmp(&gap(b, &wanted)));
        if let Some(band) = best {
            let target = band.intersect(&wanted).unwrap_or(band);
            out.set(k, target.clamp(v));
        }
        window.push(district, k, at, out.get(k));
    }
    Ok(out)
}
