//! Per-node-type importance from attention weights or gradients, stratified
//! importance tables and cross-strategy top-1 agreement.

mod agreement;
mod importance;
mod sample;
mod table;

pub use agreement::{top1_agreement, AgreementReport, Rate};
pub use importance::{
    attention_importance, explain_reports, gradient_importance, group_of, normalize_groups, Group, ImportanceVector,
    Method,
};
pub use sample::stratified_sample;
pub use table::{aggregate_importance, rank, top_k, Cell, ImportanceTable};

use thiserror::Error;

use crate::models::ModelError;
use crate::ndiff::NdError;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("attention record is empty (inductive variant); use gradient importance instead")]
    NoAttention,
    #[error("sample {0} has no eligible neighbors")]
    NoNeighbors(u64),
    #[error("need at least two strategies to compare, got {0}")]
    TooFewStrategies(usize),
    #[error("strategy {strategy:?} covers different sample ids than {reference:?}")]
    SampleMismatch { strategy: String, reference: String },
    #[error("importance table: {0}")]
    Parse(String),
    #[error("report {0} outside the batch")]
    Report(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests;
