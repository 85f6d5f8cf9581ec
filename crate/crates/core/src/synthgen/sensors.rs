use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{Gauss, GenConfig, Range};
use super::domain::{AlertState, Category, Risk, Season, SensorKind, Sensors};
use super::SynthError;

/// Draw from `g` restricted to `bounds`: resample a few times, then clamp.
pub(crate) fn truncated<R: Rng>(g: Gauss, bounds: Range, rng: &mut R) -> f64 {
    if g.std <= 0.0 {
        return bounds.clamp(g.mean);
    }
    let normal = Normal::new(g.mean, g.std).expect("std > 0");
    for _ in 0..32 {
        let v = normal.sample(rng);
        if bounds.contains(v) {
            return v;
        }
    }
    bounds.clamp(normal.sample(rng))
}

/// Exact draw from `g` conditioned on `range`: uniform proposals accepted
/// with the density ratio against the in-range mode.
pub(crate) fn truncated_in<R: Rng>(g: Gauss, range: Range, rng: &mut R) -> f64 {
    let mode = range.clamp(g.mean);
    if g.std <= 0.0 || range.width() <= 0.0 {
        return mode;
    }
    let log_density = |x: f64| -((x - g.mean) / g.std).powi(2) / 2.0;
    let top = log_density(mode);
    for _ in 0..10_000 {
        let x = rng.random_range(range.lo..=range.hi);
        if rng.random::<f64>().ln() <= log_density(x) - top {
            return x;
        }
    }
    mode
}

/// Apparent temperature from air temperature, humidity and wind; `noise` is
/// an offset and spread added on top.
pub(crate) fn apparent_temperature<R: Rng>(
    s: &Sensors,
    noise: Gauss,
    cfg: &GenConfig,
    rng: &mut R,
) -> f64 {
    let t = s.temperature;
    let muggy = 0.005 * (s.humidity - 50.0) * (t - 20.0).max(0.0);
    let chill = 0.07 * s.wind * (10.0 - t).max(0.0);
    let base = Gauss {
        mean: t + noise.mean + muggy - chill,
        std: noise.std,
    };
    truncated(base, cfg.bound(SensorKind::ApparentTemp), rng)
}

fn seasonal<R: Rng>(season: Season, cfg: &GenConfig, rng: &mut R) -> Result<(Sensors, Gauss), SynthError> {
    let base = cfg
        .baseline(season)
        .ok_or_else(|| SynthError::Config(format!("no baseline for season {season}")))?;
    let mut s = Sensors::default();
    for &k in SensorKind::ALL {
        if k != SensorKind::ApparentTemp {
            s.set(k, truncated(base.sensors[k.index()], cfg.bound(k), rng));
        }
    }
    Ok((s, base.sensors[SensorKind::ApparentTemp.index()]))
}

/// Seasonal baseline for every sensor, with the category's primary sensors
/// drawn from their risk-graded distributions.
pub fn generate_risk_based_sensors<R: Rng>(
    category: Category,
    risk: Risk,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Sensors, SynthError> {
    let (mut s, noise) = seasonal(category.season(), cfg, rng)?;
    for &k in category.primary_sensors() {
        if let Some(rg) = cfg.risk_graded_for(category, k) {
            s.set(k, truncated(rg.by_risk[risk.index()], cfg.bound(k), rng));
        }
    }
    s.apparent_temp = apparent_temperature(&s, noise, cfg, rng);
    Ok(s)
}

/// Sensors for an alert-bearing report: the alert's governed sensor is drawn
/// from the category's risk-graded distribution conditioned on the rule range
/// (uniform over the range when the category has none), everything else as in
/// [`generate_risk_based_sensors`].
pub fn generate_constrained_sensors<R: Rng>(
    alert: AlertState,
    category: Category,
    risk: Risk,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Sensors, SynthError> {
    let AlertState::Active(family, severity) = alert else {
        return Err(SynthError::NoAlert);
    };
    let rule = cfg
        .rule(family)
        .ok_or_else(|| SynthError::Config(format!("no rule for alert family {family}")))?;
    let range = rule
        .range(severity)
        .ok_or_else(|| SynthError::Config(format!("alert {alert} has no severity")))?;
    let range = range
        .intersect(&cfg.bound(rule.sensor))
        .ok_or_else(|| SynthError::Config(format!("rule {alert} lies outside physical bounds")))?;

    let (mut s, noise) = seasonal(category.season(), cfg, rng)?;
    for &k in category.primary_sensors() {
        if let Some(rg) = cfg.risk_graded_for(category, k) {
            s.set(k, truncated(rg.by_risk[risk.index()], cfg.bound(k), rng));
        }
    }
    let governed = match cfg.risk_graded_for(category, rule.sensor) {
        Some(rg) => truncated_in(rg.by_risk[risk.index()], range, rng),
        None => rng.random_range(range.lo..=range.hi),
    };
    s.set(rule.sensor, governed);
    s.apparent_temp = apparent_temperature(&s, noise, cfg, rng);
    Ok(s)
}
