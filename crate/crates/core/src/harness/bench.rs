use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::anchors::{assemble_inference_graph, AnchorSet};
use crate::graph::{percentile, Quantizers};
use crate::models::{predict, ModelConfig};
use crate::ndiff::ParamStore;
use crate::synthgen::{Gazetteer, ReportRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub strategy: String,
    pub n: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(strategy: &str, ms: &[f64]) -> Result<Self, HarnessError> {
        if ms.is_empty() {
            return Err(HarnessError::Empty);
        }
        let n = ms.len() as f64;
        let mean = ms.iter().sum::<f64>() / n;
        let var = ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = ms.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(LatencyStats {
            strategy: strategy.to_string(),
            n: ms.len(),
            mean_ms: mean,
            std_ms: var.sqrt(),
            median_ms: percentile(&sorted, 0.5),
        })
    }
}

/// Per-sample wall time of inference-graph assembly plus the forward pass.
/// The first `warmup` runs cycle through the samples and are discarded.
#[allow(clippy::too_many_arguments)]
pub fn latency_bench(
    set: &AnchorSet,
    samples: &[ReportRecord],
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    q: &Quantizers,
    gaz: &Gazetteer,
    warmup: usize,
    seed: u64,
) -> Result<LatencyStats, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for rec in samples.iter().cycle().take(warmup) {
        let g = assemble_inference_graph(rec, set, q, gaz, &mut rng)?;
        predict(params, cfg, &g)?;
    }
    let mut ms = Vec::with_capacity(samples.len());
    for rec in samples {
        let t0 = Instant::now();
        let g = assemble_inference_graph(rec, set, q, gaz, &mut rng)?;
        std::hint::black_box(predict(params, cfg, &g)?);
        ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    LatencyStats::from_samples(set.strategy.name(), &ms)
}
