use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::bench::LatencyStats;
use super::HarnessError;
use crate::synthgen::Risk;

/// Classification metrics in percent. A class that never occurs has no
/// recall and a class that is never predicted has no precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub accuracy: f64,
    pub precision: [Option<f64>; 3],
    pub recall: [Option<f64>; 3],
    pub fp_high: Option<f64>,
    pub fn_high: Option<f64>,
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; 3]; 3],
    pub support: [usize; 3],
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub latency: BTreeMap<String, LatencyStats>,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Metrics for class indices `predictions` against `labels`.
pub fn compute_metrics(predictions: &[usize], labels: &[usize]) -> Result<MetricsReport, HarnessError> {
    if predictions.len() != labels.len() {
        return Err(HarnessError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut confusion = [[0usize; 3]; 3];
    for (&p, &t) in predictions.iter().zip(labels) {
        if p > 2 || t > 2 {
            return Err(HarnessError::Config(format!("class index out of range: {p} / {t}")));
        }
        confusion[t][p] += 1;
    }
    let support = confusion.map(|row| row.iter().sum::<usize>());
    let predicted: [usize; 3] = std::array::from_fn(|c| (0..3).map(|t| confusion[t][c]).sum());
    let precision: [Option<f64>; 3] = std::array::from_fn(|c| pct(confusion[c][c], predicted[c]));
    let recall: [Option<f64>; 3] = std::array::from_fn(|c| pct(confusion[c][c], support[c]));
    let h = Risk::High.index();
    let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
    Ok(MetricsReport {
        n: labels.len(),
        accuracy: 100.0 * correct as f64 / labels.len() as f64,
        precision,
        recall,
        fp_high: pct(predicted[h] - confusion[h][h], predicted[h]),
        fn_high: pct(support[h] - confusion[h][h], support[h]),
        confusion,
        support,
        latency: BTreeMap::new(),
    })
}
