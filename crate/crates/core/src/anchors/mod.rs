//! Anchor records that give a lone incoming report some training context at
//! inference time, and assembly of the resulting inference graphs.

mod select;
mod set;
mod synthetic;

pub use select::{
    build_coverage_anchors, build_median_anchor, farthest_point_sampling, median_point, nearest_to_median,
    sensor_point,
};
pub use set::{
    assemble_inference_graph, build_anchor_set, infer, AnchorProvenance, AnchorSet, AnchorStrategy, Inference,
    SYNTHETIC_ID,
};
pub use synthetic::{build_synthetic_anchor, fit_prototype, Context, Prototype};

use thiserror::Error;

use crate::explain::ExplainError;
use crate::graph::GraphError;
use crate::models::ModelError;
use crate::synthgen::Category;

#[derive(Debug, Error)]
pub enum AnchorError {
    #[error("no training records of category {0}")]
    EmptyCategory(Category),
    #[error("anchor set has nothing for category {0}")]
    MissingCategory(Category),
    #[error("unknown anchor strategy {0:?}")]
    UnknownStrategy(String),
    #[error("prototype: {0}")]
    Prototype(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
