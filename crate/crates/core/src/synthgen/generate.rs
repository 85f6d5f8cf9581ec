use chrono::{Datelike, NaiveDate, NaiveDateTime};
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::alerts::generate_alert_sequence;
use super::config::GenConfig;
use super::domain::{AlertState, Category, Drainage, PreAlert, ReportRecord, Risk, Season};
use super::sensors::{generate_constrained_sensors, generate_risk_based_sensors};
use super::temporal::{enforce_temporal_consistency, TemporalWindow};
use super::SynthError;

fn check_risk_dist(risk_dist: &[f64; 3]) -> Result<(), SynthError> {
    let sum: f64 = risk_dist.iter().sum();
    if risk_dist.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SynthError::RiskDist(format!(
            "{risk_dist:?} must be non-negative and sum to 1 (sum = {sum})"
        )));
    }
    Ok(())
}

fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1)
        .and_then(|d| d.pred_opt())
        .map_or(28, |d| d.day())
}

/// Uniform day within the season's months of `year`, hour by `hour_weights`.
pub fn generate_timestamp<R: Rng>(
    year: i32,
    season: Season,
    hours: &WeightedIndex<f64>,
    rng: &mut R,
) -> Result<NaiveDateTime, SynthError> {
    let months = season.months();
    let total: u32 = months.iter().map(|&m| days_in_month(year, m)).sum();
    let mut day = rng.random_range(0..total);
    let mut month = months[0];
    for &m in &months {
        let n = days_in_month(year, m);
        if day < n {
            month = m;
            break;
        }
        day -= n;
    }
    let hour = hours.sample(rng) as u32;
    let minute = rng.random_range(0..60);
    NaiveDate::from_ymd_opt(year, month, day + 1)
        .and_then(|d| d.and_hms_opt(hour, minute, 0))
        .ok_or_else(|| SynthError::Config(format!("cannot form a date in {year}-{month}")))
}

struct Draft {
    category: Category,
    timestamp: NaiveDateTime,
    risk: Risk,
    district: usize,
}

pub fn generate_dataset(
    n: usize,
    year: i32,
    risk_dist: [f64; 3],
    seed: u64,
) -> Result<Vec<ReportRecord>, SynthError> {
    generate_dataset_with(&GenConfig::default(), n, year, risk_dist, seed)
}

/// Generate `n` records. Category, time, risk and place are drawn first; the
/// records are then completed in timestamp order so the rolling window sees
/// readings chronologically. Ids follow timestamp order.
pub fn generate_dataset_with(
    cfg: &GenConfig,
    n: usize,
    year: i32,
    risk_dist: [f64; 3],
    seed: u64,
) -> Result<Vec<ReportRecord>, SynthError> {
    if n == 0 {
        return Err(SynthError::Empty);
    }
    check_risk_dist(&risk_dist)?;
    if cfg.gazetteer.districts.is_empty() {
        return Err(SynthError::Config("gazetteer has no districts".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hours = WeightedIndex::new(cfg.hour_weights).map_err(|e| SynthError::Config(format!("hour weights: {e}")))?;
    let risks = WeightedIndex::new(risk_dist).map_err(|e| SynthError::RiskDist(e.to_string()))?;
    let drainage: Vec<WeightedIndex<f64>> = cfg
        .drainage_probs
        .iter()
        .map(WeightedIndex::new)
        .collect::<Result<_, _>>()
        .map_err(|e| SynthError::Config(format!("drainage probabilities: {e}")))?;
    let colocated: Vec<Poisson<f64>> = cfg
        .colocated_lambda
        .iter()
        .map(|&l| Poisson::new(l))
        .collect::<Result<_, _>>()
        .map_err(|e| SynthError::Config(format!("co-located rate: {e}")))?;

    let mut drafts = Vec::with_capacity(n);
    for _ in 0..n {
        let category = Category::ALL[rng.random_range(0..Category::ALL.len())];
        let timestamp = generate_timestamp(year, category.season(), &hours, &mut rng)?;
        let risk = Risk::ALL[risks.sample(&mut rng)];
        let district = rng.random_range(0..cfg.gazetteer.districts.len());
        drafts.push(Draft {
            category,
            timestamp,
            risk,
            district,
        });
    }
    // Stable sort keeps draw order among equal timestamps.
    drafts.sort_by_key(|d| d.timestamp);

    let mut window = TemporalWindow::new(&cfg.gazetteer);
    let mut out = Vec::with_capacity(n);
    for (id, d) in drafts.into_iter().enumerate() {
        let (alert, pre_alert) = if d.risk == Risk::Low {
            (AlertState::None, PreAlert::NONE)
        } else {
            generate_alert_sequence(d.category, d.risk, cfg, &mut rng)?
        };
        let (raw, governed) = match alert {
            AlertState::None => (generate_risk_based_sensors(d.category, d.risk, cfg, &mut rng)?, None),
            AlertState::Active(f, s) => {
                let rule = cfg.rule(f).expect("constrained sensors found the rule");
                (
                    generate_constrained_sensors(alert, d.category, d.risk, cfg, &mut rng)?,
                    rule.range(s).map(|r| (rule.sensor, r)),
                )
            }
        };
        let sensors = enforce_temporal_consistency(&raw, d.district, d.timestamp, &mut window, cfg.sigma, cfg, governed)?;
        let drain = Drainage::ALL[drainage[d.risk.index()].sample(&mut rng)];
        let count = (colocated[d.risk.index()].sample(&mut rng) as u32).min(cfg.colocated_max);
        out.push(ReportRecord {
            id: id as u64,
            timestamp: d.timestamp,
            category: d.category,
            season: d.category.season(),
            location: cfg.gazetteer.districts[d.district].name.clone(),
            sensors,
            alert,
            pre_alert,
            drainage: drain,
            colocated_count: count,
            risk: d.risk,
        });
    }
    Ok(out)
}
