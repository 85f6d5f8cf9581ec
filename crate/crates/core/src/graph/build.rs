use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::encode::{encode_node, raw_value, Quantizers};
use super::schema::{NodeType, Relation, TypeSet};
use super::GraphError;
use crate::ndiff::Tensor;
use crate::synthgen::{Category, Gazetteer, ReportRecord, Risk};
use crate::util::sha256_hex;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeList {
    pub src: Vec<u32>,
    pub dst: Vec<u32>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn push(&mut self, s: usize, d: usize) {
        self.src.push(s as u32);
        self.dst.push(d as u32);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportInfo {
    pub record_id: u64,
    pub category: Category,
    pub risk: Risk,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_hash: String,
    /// Hash of the prune spec used, or `"original"`.
    pub prune_spec: String,
}

impl Default for Provenance {
    fn default() -> Self {
        Self {
            dataset_hash: String::new(),
            prune_spec: "original".into(),
        }
    }
}

pub type Slots = [Option<u32>; 15];

/// Typed node tables plus relation-labeled directed edges.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    /// Indexed by [`NodeType::index`]; one row per node.
    pub features: Vec<Tensor<f32>>,
    /// Every relation of [`Relation::all`] is present, possibly empty.
    pub edges: BTreeMap<Relation, EdgeList>,
    pub reports: Vec<ReportInfo>,
    pub labeled: Vec<bool>,
    /// Report scored at inference, if any.
    pub target: Option<usize>,
    /// Gazetteer index of each location node.
    pub location_districts: Vec<usize>,
    pub location_regions: Vec<u8>,
    /// Per report, the node linked for each neighbor type (slot order).
    pub slots: Vec<Slots>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: BTreeMap<String, usize>,
    pub edges: BTreeMap<String, usize>,
    pub total_nodes: usize,
    pub total_edges: usize,
    /// Edges incident to a report node.
    pub report_edges: usize,
    pub content_hash: String,
}

/// Percentage reduction from `before` to `after`, rounded to 0.1.
pub fn reduction_pct(before: usize, after: usize) -> f64 {
    if before == 0 {
        return 0.0;
    }
    let pct = 100.0 * (before as f64 - after as f64) / before as f64;
    (pct * 10.0).round() / 10.0
}

struct Builder {
    rows: Vec<Vec<f32>>,
    counts: [usize; 16],
    edges: BTreeMap<Relation, EdgeList>,
}

impl Builder {
    fn new() -> Self {
        Self {
            rows: vec![Vec::new(); 16],
            counts: [0; 16],
            edges: Relation::all().into_iter().map(|r| (r, EdgeList::default())).collect(),
        }
    }

    fn add_node(&mut self, t: NodeType, row: &[f32]) -> usize {
        debug_assert_eq!(row.len(), t.dim());
        self.rows[t.index()].extend_from_slice(row);
        self.counts[t.index()] += 1;
        self.counts[t.index()] - 1
    }

    fn link(&mut self, report: usize, t: NodeType, node: usize) {
        self.edges.get_mut(&Relation::Has(t)).expect("relation").push(report, node);
        self.edges.get_mut(&Relation::Of(t)).expect("relation").push(node, report);
    }

    fn adjacency(&mut self, regions: &[u8]) {
        let adj = self.edges.get_mut(&Relation::AdjacentTo).expect("relation");
        for a in 0..regions.len() {
            for b in 0..regions.len() {
                if a != b && regions[a] == regions[b] {
                    adj.push(a, b);
                }
            }
        }
    }

    fn finish(self) -> Vec<Tensor<f32>> {
        self.rows
            .into_iter()
            .zip(NodeType::ALL)
            .map(|(data, t)| Tensor::new(&[self.counts[t.index()], t.dim()], data).expect("row-sized"))
            .collect()
    }
}

fn to_f32(v: Vec<f64>) -> Vec<f32> {
    v.into_iter().map(|x| x as f32).collect()
}

/// Build the report-centred graph. `keep` gives the neighbor types each
/// record links to; structural types are always kept.
pub fn build_graph_with<F>(
    records: &[ReportRecord],
    q: &Quantizers,
    gaz: &Gazetteer,
    keep: F,
) -> Result<HeteroGraph, GraphError>
where
    F: Fn(&ReportRecord) -> Result<TypeSet, GraphError>,
{
    if records.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut districts = BTreeSet::new();
    let mut rec_district = Vec::with_capacity(records.len());
    for r in records {
        let d = gaz
            .index_of(&r.location)
            .ok_or_else(|| GraphError::UnknownDistrict(r.location.clone()))?;
        rec_district.push(d);
        districts.extend(gaz.region_members(d));
    }
    let location_districts: Vec<usize> = districts.into_iter().collect();
    let location_regions: Vec<u8> = location_districts.iter().map(|&d| gaz.districts[d].region).collect();
    let loc_node: BTreeMap<usize, usize> = location_districts.iter().enumerate().map(|(i, &d)| (d, i)).collect();

    let mut b = Builder::new();
    for &d in &location_districts {
        let f = encode_node(
            NodeType::Location,
            &super::encode::RawValue::District(&gaz.districts[d].name),
            q,
            gaz,
        )?;
        b.add_node(NodeType::Location, &to_f32(f));
    }
    b.adjacency(&location_regions);

    let structural: TypeSet = NodeType::STRUCTURAL.into_iter().collect();
    let mut slots = Vec::with_capacity(records.len());
    let mut reports = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let keep = keep(rec)?.union(structural);
        let report = b.add_node(NodeType::Report, &[1.0]);
        debug_assert_eq!(report, i);
        let mut s: Slots = [None; 15];
        for t in NodeType::NEIGHBORS {
            if !keep.contains(t) {
                continue;
            }
            let node = if t == NodeType::Location {
                loc_node[&rec_district[i]]
            } else {
                let f = encode_node(t, &raw_value(rec, t), q, gaz)?;
                b.add_node(t, &to_f32(f))
            };
            b.link(report, t, node);
            s[t.slot().expect("neighbor")] = Some(node as u32);
        }
        slots.push(s);
        reports.push(ReportInfo {
            record_id: rec.id,
            category: rec.category,
            risk: rec.risk,
        });
    }
    let edges = std::mem::take(&mut b.edges);
    Ok(HeteroGraph {
        features: b.finish(),
        edges,
        labeled: vec![false; reports.len()],
        reports,
        target: None,
        location_districts,
        location_regions,
        slots,
        provenance: Provenance {
            dataset_hash: crate::util::json_hash(&records),
            ..Provenance::default()
        },
    })
}

/// Full star for every record.
pub fn build_graph(records: &[ReportRecord], q: &Quantizers, gaz: &Gazetteer) -> Result<HeteroGraph, GraphError> {
    build_graph_with(records, q, gaz, |_| Ok(TypeSet::all_neighbors()))
}

impl HeteroGraph {
    pub fn count(&self, t: NodeType) -> usize {
        self.features[t.index()].rows()
    }

    pub fn n_reports(&self) -> usize {
        self.count(NodeType::Report)
    }

    pub fn edge_list(&self, r: Relation) -> &EdgeList {
        &self.edges[&r]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.reports.iter().map(|r| r.risk.index()).collect()
    }

    /// Reports whose star lost every neighbor.
    pub fn isolated_reports(&self) -> Vec<usize> {
        (0..self.n_reports())
            .filter(|&i| self.slots[i].iter().all(Option::is_none))
            .collect()
    }

    /// Neighbor types present in report `i`'s star.
    pub fn neighbor_types(&self, i: usize) -> TypeSet {
        NodeType::NEIGHBORS
            .into_iter()
            .filter(|t| self.slots[i][t.slot().expect("neighbor")].is_some())
            .collect()
    }

    /// Assemble a graph from explicit parts; slots are derived from the
    /// `Has` relations (first edge wins).
    pub fn from_parts(
        features: Vec<Tensor<f32>>,
        edges: BTreeMap<Relation, EdgeList>,
        reports: Vec<ReportInfo>,
        location_regions: Vec<u8>,
    ) -> Result<HeteroGraph, GraphError> {
        if features.len() != NodeType::COUNT {
            return Err(GraphError::Invalid(format!("expected 16 feature tables, got {}", features.len())));
        }
        for (t, f) in NodeType::ALL.iter().zip(&features) {
            if f.shape().len() != 2 || f.shape()[1] != t.dim() {
                return Err(GraphError::Invalid(format!("{t} features have shape {:?}", f.shape())));
            }
        }
        let n = features[NodeType::Report.index()].rows();
        if reports.len() != n {
            return Err(GraphError::Invalid(format!("{n} report rows but {} report records", reports.len())));
        }
        let mut all: BTreeMap<Relation, EdgeList> = Relation::all().into_iter().map(|r| (r, EdgeList::default())).collect();
        all.extend(edges);
        let mut slots = vec![[None; 15]; n];
        for t in NodeType::NEIGHBORS {
            let e = &all[&Relation::Has(t)];
            for (&s, &d) in e.src.iter().zip(&e.dst).rev() {
                if let Some(row) = slots.get_mut(s as usize) {
                    row[t.slot().expect("neighbor")] = Some(d);
                }
            }
        }
        let n_loc = features[NodeType::Location.index()].rows();
        let g = HeteroGraph {
            features,
            edges: all,
            labeled: vec![false; n],
            reports,
            target: None,
            location_districts: (0..n_loc).collect(),
            location_regions,
            slots,
            provenance: Provenance::default(),
        };
        g.check_endpoints()?;
        Ok(g)
    }

    pub fn check_endpoints(&self) -> Result<(), GraphError> {
        for (rel, e) in &self.edges {
            let (ns, nd) = (self.count(rel.src()), self.count(rel.dst()));
            if e.src.len() != e.dst.len() {
                return Err(GraphError::Invalid(format!("{}: ragged edge list", rel.name())));
            }
            if let Some(i) = e.src.iter().zip(&e.dst).position(|(&s, &d)| s as usize >= ns || d as usize >= nd) {
                return Err(GraphError::Invalid(format!(
                    "{}: edge {i} ({}, {}) out of range ({ns}, {nd})",
                    rel.name(),
                    e.src[i],
                    e.dst[i]
                )));
            }
        }
        Ok(())
    }

    /// Structural invariants: endpoints in range, every edge paired with
    /// exactly one reverse edge, at most one neighbor per type per report.
    pub fn check_invariants(&self) -> Result<(), GraphError> {
        self.check_endpoints()?;
        for (rel, e) in &self.edges {
            let mut fwd: Vec<(u32, u32)> = e.src.iter().copied().zip(e.dst.iter().copied()).collect();
            let rev = &self.edges[&rel.reverse()];
            let mut back: Vec<(u32, u32)> = rev.dst.iter().copied().zip(rev.src.iter().copied()).collect();
            fwd.sort_unstable();
            back.sort_unstable();
            if fwd != back {
                return Err(GraphError::Invalid(format!("{} is not mirrored by its reverse", rel.name())));
            }
            if matches!(rel, Relation::Has(_)) && fwd.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(GraphError::Invalid(format!("{}: report with two neighbors of one type", rel.name())));
            }
        }
        Ok(())
    }

    /// Disjoint union of report-centred closed subgraphs: each listed report's
    /// star with private copies of its location and that location's region
    /// partners. Outputs computed on the batch do not depend on which other
    /// reports share it.
    pub fn closed_batch(&self, reports: &[usize]) -> HeteroGraph {
        let mut b = Builder::new();
        let mut slots = Vec::with_capacity(reports.len());
        let mut infos = Vec::with_capacity(reports.len());
        let mut labeled = Vec::with_capacity(reports.len());
        let mut loc_d = Vec::new();
        let mut loc_r = Vec::new();
        for &r in reports {
            let local = b.add_node(NodeType::Report, &[1.0]);
            let own_loc = self.slots[r][NodeType::Location.slot().expect("neighbor")];
            let mut copies: BTreeMap<usize, usize> = BTreeMap::new();
            if let Some(own) = own_loc {
                let region = self.location_regions[own as usize];
                let base = loc_r.len();
                for (li, &lr) in self.location_regions.iter().enumerate() {
                    if lr == region {
                        let row = self.features[NodeType::Location.index()].row(li).to_vec();
                        copies.insert(li, b.add_node(NodeType::Location, &row));
                        loc_d.push(self.location_districts[li]);
                        loc_r.push(lr);
                    }
                }
                let adj = b.edges.get_mut(&Relation::AdjacentTo).expect("relation");
                let n = loc_r.len() - base;
                for a in 0..n {
                    for c in 0..n {
                        if a != c {
                            adj.push(base + a, base + c);
                        }
                    }
                }
            }
            let mut s: Slots = [None; 15];
            for t in NodeType::NEIGHBORS {
                let Some(node) = self.slots[r][t.slot().expect("neighbor")] else {
                    continue;
                };
                let new = if t == NodeType::Location {
                    copies[&(node as usize)]
                } else {
                    let row = self.features[t.index()].row(node as usize).to_vec();
                    b.add_node(t, &row)
                };
                b.link(local, t, new);
                s[t.slot().expect("neighbor")] = Some(new as u32);
            }
            slots.push(s);
            infos.push(self.reports[r].clone());
            labeled.push(self.labeled[r]);
        }
        let edges = std::mem::take(&mut b.edges);
        HeteroGraph {
            features: b.finish(),
            edges,
            reports: infos,
            labeled,
            target: None,
            location_districts: loc_d,
            location_regions: loc_r,
            slots,
            provenance: self.provenance.clone(),
        }
    }

    /// Hash of features, edges and report metadata (provenance excluded).
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        for (t, f) in NodeType::ALL.iter().zip(&self.features) {
            buf.extend_from_slice(t.name().as_bytes());
            for &d in f.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in f.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        for (rel, e) in &self.edges {
            buf.extend_from_slice(rel.name().as_bytes());
            for (s, d) in e.src.iter().zip(&e.dst) {
                buf.extend_from_slice(&s.to_le_bytes());
                buf.extend_from_slice(&d.to_le_bytes());
            }
        }
        for (r, l) in self.reports.iter().zip(&self.labeled) {
            buf.extend_from_slice(&r.record_id.to_le_bytes());
            buf.push(r.category.index() as u8);
            buf.push(r.risk.index() as u8);
            buf.push(u8::from(*l));
        }
        sha256_hex(&buf)
    }

    pub fn stats(&self) -> GraphStats {
        let nodes: BTreeMap<String, usize> = NodeType::ALL.iter().map(|t| (t.name().to_string(), self.count(*t))).collect();
        let edges: BTreeMap<String, usize> = self.edges.iter().map(|(r, e)| (r.name(), e.len())).collect();
        let report_edges = self
            .edges
            .iter()
            .filter(|(r, _)| !matches!(r, Relation::AdjacentTo))
            .map(|(_, e)| e.len())
            .sum();
        GraphStats {
            total_nodes: nodes.values().sum(),
            total_edges: edges.values().sum(),
            nodes,
            edges,
            report_edges,
            content_hash: self.content_hash(),
        }
    }
}

pub fn graph_stats(g: &HeteroGraph) -> GraphStats {
    g.stats()
}
