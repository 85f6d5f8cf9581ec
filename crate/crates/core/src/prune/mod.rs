//! Category-conditioned prune specs derived from importance tables, and the
//! rebuild / retrain comparison around them.

mod apply;
mod cycle;
mod spec;

pub use apply::{apply_prune, prune_graph, reduction_report, ReductionReport, RelationCount};
pub use cycle::{
    explain_sample, prune_retrain_cycle, cycle_from, fit_original, Trained, retrain_with_spec, write_rows, ComparisonRow, CycleConfig, CycleReport,
    Dataset,
};
pub use spec::{derive, derive_bottom_excluded, derive_top_only, PruneScope, PruneSpec, Strategy};

use thiserror::Error;

use crate::explain::ExplainError;
use crate::graph::GraphError;
use crate::models::ModelError;
use crate::synthgen::{Category, Risk};

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("importance table has no cell for ({0}, {1})")]
    MissingCell(Category, Risk),
    #[error("prune spec does not cover category {0}")]
    MissingCategory(Category),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
