pub mod anchors;
pub mod explain;
pub mod graph;
pub mod harness;
pub mod models;
pub mod ndiff;
pub mod prune;
pub mod synthgen;
pub mod util;
