//! The three risk classifiers over a shared two-layer heterogeneous SAGE
//! backbone: plain (inductive), one attention head, and three specialised
//! heads fused by a combiner.

mod check;
mod forward;
mod params;
mod train;

pub use check::check_model_gradients;
pub use forward::{forward, predict, AttentionRecord, ForwardOut, HeadAttention, Prediction};
pub use params::{init_params, HeadKind, ModelConfig, Variant};
pub use train::{
    class_weights, evaluate, train, EarlyStopping, EpochLog, Evaluation, TrainConfig, TrainOutcome, TrainProfile,
};

use thiserror::Error;

use crate::graph::GraphError;
use crate::ndiff::NdError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nd(#[from] NdError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no labeled training reports")]
    NoLabeled,
    #[error("validation set is empty")]
    EmptyVal,
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("{0}")]
    Invalid(String),
}

#[cfg(test)]
mod tests;
