use super::AnchorError;
use crate::graph::{percentile, Quantizers};
use crate::synthgen::{default_alert_rules, rule_verdict, Category, ReportRecord, SensorKind};

/// Sensor vector scaled to [0, 1] by the quantizers' physical ranges.
pub fn sensor_point(rec: &ReportRecord, q: &Quantizers) -> [f64; 7] {
    let mut p = [0.0; 7];
    for &k in SensorKind::ALL {
        p[k.index()] = q.get(k).normalize(rec.sensors.get(k));
    }
    p
}

fn dist2(a: &[f64; 7], b: &[f64; 7]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Per-coordinate median of `points`.
pub fn median_point(points: &[[f64; 7]]) -> [f64; 7] {
    let mut m = [0.0; 7];
    for (d, slot) in m.iter_mut().enumerate() {
        let mut col: Vec<f64> = points.iter().map(|p| p[d]).collect();
        col.sort_by(f64::total_cmp);
        *slot = percentile(&col, 0.5);
    }
    m
}

/// Index of the point closest to the coordinate-wise median; the first on ties.
pub fn nearest_to_median(points: &[[f64; 7]]) -> Option<usize> {
    let m = median_point(points);
    (0..points.len()).min_by(|&a, &b| dist2(&points[a], &m).total_cmp(&dist2(&points[b], &m)))
}

/// Greedy farthest-point sampling from `seed`. Stops early once every
/// remaining point coincides with a pick.
pub fn farthest_point_sampling(points: &[[f64; 7]], seed: usize, k: usize) -> Vec<usize> {
    if points.is_empty() || k == 0 {
        return Vec::new();
    }
    let mut picks = vec![seed];
    let mut min_d: Vec<f64> = points.iter().map(|p| dist2(p, &points[seed])).collect();
    while picks.len() < k {
        let (j, d) = min_d
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        if d <= 0.0 {
            break;
        }
        picks.push(j);
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(dist2(p, &points[j]));
        }
    }
    picks
}

/// Anchor candidates: records of `c` that do not break their alert rule.
fn of_category<'a>(train: &'a [ReportRecord], c: Category) -> Result<Vec<&'a ReportRecord>, AnchorError> {
    let rules = default_alert_rules();
    let v: Vec<&ReportRecord> = train
        .iter()
        .filter(|r| r.category == c && rule_verdict(r, &rules) != Some(false))
        .collect();
    if v.is_empty() {
        return Err(AnchorError::EmptyCategory(c));
    }
    Ok(v)
}

/// The training record of `c` nearest the per-sensor median.
pub fn build_median_anchor(train: &[ReportRecord], c: Category, q: &Quantizers) -> Result<ReportRecord, AnchorError> {
    let recs = of_category(train, c)?;
    let pts: Vec<[f64; 7]> = recs.iter().map(|r| sensor_point(r, q)).collect();
    let i = nearest_to_median(&pts).expect("non-empty");
    Ok(recs[i].clone())
}

/// `k` farthest-point picks seeded at the median anchor. The flag is set when
/// fewer than `k` distinct points were available.
pub fn build_coverage_anchors(
    train: &[ReportRecord],
    c: Category,
    k: usize,
    q: &Quantizers,
) -> Result<(Vec<ReportRecord>, bool), AnchorError> {
    let recs = of_category(train, c)?;
    let pts: Vec<[f64; 7]> = recs.iter().map(|r| sensor_point(r, q)).collect();
    let seed = nearest_to_median(&pts).expect("non-empty");
    let picks = farthest_point_sampling(&pts, seed, k);
    let short = picks.len() < k;
    Ok((picks.into_iter().map(|i| recs[i].clone()).collect(), short))
}
