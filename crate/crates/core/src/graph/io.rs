//! On-disk graph directory: one little-endian f32 file per node type, one
//! u32 (src, dst) pair file per relation, and a JSON header.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::build::{EdgeList, HeteroGraph, Provenance, ReportInfo};
use super::schema::{NodeType, Relation};
use super::GraphError;
use crate::ndiff::Tensor;

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    node_counts: BTreeMap<String, usize>,
    edge_counts: BTreeMap<String, usize>,
    reports: Vec<ReportInfo>,
    labeled: Vec<bool>,
    target: Option<usize>,
    location_districts: Vec<usize>,
    location_regions: Vec<u8>,
    provenance: Provenance,
    content_hash: String,
}

pub fn save_graph(g: &HeteroGraph, dir: &Path) -> Result<(), GraphError> {
    fs::create_dir_all(dir.join("nodes"))?;
    fs::create_dir_all(dir.join("edges"))?;
    for (t, f) in NodeType::ALL.iter().zip(&g.features) {
        let bytes: Vec<u8> = f.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(dir.join("nodes").join(format!("{}.f32", t.name())), bytes)?;
    }
    for (rel, e) in &g.edges {
        let bytes: Vec<u8> = e
            .src
            .iter()
            .zip(&e.dst)
            .flat_map(|(s, d)| s.to_le_bytes().into_iter().chain(d.to_le_bytes()))
            .collect();
        fs::write(dir.join("edges").join(format!("{}.u32", rel.name())), bytes)?;
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        node_counts: NodeType::ALL.iter().map(|t| (t.name().to_string(), g.count(*t))).collect(),
        edge_counts: g.edges.iter().map(|(r, e)| (r.name(), e.len())).collect(),
        reports: g.reports.clone(),
        labeled: g.labeled.clone(),
        target: g.target,
        location_districts: g.location_districts.clone(),
        location_regions: g.location_regions.clone(),
        provenance: g.provenance.clone(),
        content_hash: g.content_hash(),
    };
    fs::write(dir.join("graph.json"), serde_json::to_vec_pretty(&header)?)?;
    Ok(())
}

pub fn load_graph(dir: &Path) -> Result<HeteroGraph, GraphError> {
    let header: Header = serde_json::from_slice(&fs::read(dir.join("graph.json"))?)?;
    if header.format_version != FORMAT_VERSION {
        return Err(GraphError::Invalid(format!("unsupported graph format {}", header.format_version)));
    }
    let mut features = Vec::with_capacity(NodeType::COUNT);
    for t in NodeType::ALL {
        let bytes = fs::read(dir.join("nodes").join(format!("{}.f32", t.name())))?;
        let n = *header
            .node_counts
            .get(t.name())
            .ok_or_else(|| GraphError::Invalid(format!("header lacks node count for {t}")))?;
        if bytes.len() != n * t.dim() * 4 {
            return Err(GraphError::Invalid(format!("{t}: {} bytes for {n} nodes", bytes.len())));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        features.push(Tensor::new(&[n, t.dim()], data).map_err(|e| GraphError::Invalid(e.to_string()))?);
    }
    let mut edges = BTreeMap::new();
    for rel in Relation::all() {
        let bytes = fs::read(dir.join("edges").join(format!("{}.u32", rel.name())))?;
        if bytes.len() % 8 != 0 {
            return Err(GraphError::Invalid(format!("{}: truncated edge file", rel.name())));
        }
        let mut e = EdgeList::default();
        for pair in bytes.chunks_exact(8) {
            e.src.push(u32::from_le_bytes(pair[..4].try_into().expect("4 bytes")));
            e.dst.push(u32::from_le_bytes(pair[4..].try_into().expect("4 bytes")));
        }
        edges.insert(rel, e);
    }
    let mut g = HeteroGraph::from_parts(features, edges, header.reports, header.location_regions)?;
    g.labeled = header.labeled;
    g.target = header.target;
    g.location_districts = header.location_districts;
    g.provenance = header.provenance;
    if g.labeled.len() != g.n_reports() || g.location_districts.len() != g.count(NodeType::Location) {
        return Err(GraphError::Invalid("header does not match node tables".into()));
    }
    if g.content_hash() != header.content_hash {
        return Err(GraphError::Invalid("content hash does not match header".into()));
    }
    Ok(g)
}
