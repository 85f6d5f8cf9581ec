//! Heterogeneous report graph: node schema, feature encoders and assembly.

mod build;
mod encode;
mod io;
mod schema;

pub use build::{
    build_graph, build_graph_with, graph_stats, reduction_pct, EdgeList, GraphStats, HeteroGraph, Provenance,
    ReportInfo, Slots,
};
pub use encode::{
    encode_node, fit_quantizers, lead_time_bin, location_features, percentile, raw_value,
    report_count_bin, Quantizers, RawValue, SensorQuantizer,
};
pub use io::{load_graph, save_graph};
pub use schema::{Encoding, NodeType, Relation, TypeSet};

use thiserror::Error;

use crate::synthgen::SensorKind;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("sensor {sensor} has only {distinct} distinct training values")]
    DegenerateSensor { sensor: SensorKind, distinct: usize },
    #[error("unknown district {0:?}")]
    UnknownDistrict(String),
    #[error("encode: {0}")]
    Encode(String),
    #[error("no records to build a graph from")]
    Empty,
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
