//! Experiment orchestration: metrics, latency benchmarking, end-to-end runs
//! with a content-hash manifest, and table/plot export.

mod bench;
mod config;
mod export;
mod metrics;
mod run;

pub use bench::{latency_bench, LatencyStats};
pub use config::{DatasetSpec, ExperimentConfig, Seeds, SCHEMA_VERSION};
pub use export::{export_report, ExportBundle};
pub use metrics::{compute_metrics, MetricsReport};
pub use run::{explain_with_anchors, run_experiment, Manifest, RunSummary};

use thiserror::Error;

use crate::anchors::AnchorError;
use crate::explain::ExplainError;
use crate::graph::GraphError;
use crate::models::ModelError;
use crate::ndiff::NdError;
use crate::prune::PruneError;
use crate::synthgen::SynthError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to measure")]
    Empty,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("incomplete output directory, missing: {}", .0.join(", "))]
    Missing(Vec<String>),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Anchor(#[from] AnchorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
