use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::spec::PruneSpec;
use super::PruneError;
use crate::graph::{build_graph, build_graph_with, reduction_pct, HeteroGraph, Quantizers, Relation};
use crate::synthgen::{Gazetteer, ReportRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationCount {
    pub before: usize,
    pub after: usize,
}

/// Directed-edge counts before and after pruning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub relations: BTreeMap<String, RelationCount>,
    pub edges_before: usize,
    pub edges_after: usize,
    pub reduction_pct: f64,
    pub spec_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub fn reduction_report(original: &HeteroGraph, pruned: &HeteroGraph, spec: &PruneSpec) -> ReductionReport {
    let relations: BTreeMap<String, RelationCount> = Relation::all()
        .into_iter()
        .map(|r| {
            (
                r.name(),
                RelationCount {
                    before: original.edge_list(r).len(),
                    after: pruned.edge_list(r).len(),
                },
            )
        })
        .collect();
    let edges_before = relations.values().map(|c| c.before).sum();
    let edges_after = relations.values().map(|c| c.after).sum();
    ReductionReport {
        relations,
        edges_before,
        edges_after,
        reduction_pct: reduction_pct(edges_before, edges_after),
        spec_hash: spec.hash(),
        note: spec.leakage_note().map(str::to_string),
    }
}

/// Rebuild the graph of `records` with each report linked only to the types
/// the spec retains for it.
pub fn prune_graph(
    records: &[ReportRecord],
    q: &Quantizers,
    gaz: &Gazetteer,
    spec: &PruneSpec,
) -> Result<HeteroGraph, PruneError> {
    let covered = spec.categories();
    if let Some(r) = records.iter().find(|r| !covered.contains(&r.category)) {
        return Err(PruneError::MissingCategory(r.category));
    }
    let mut g = build_graph_with(records, q, gaz, |r| {
        Ok(spec.retained(r.category, r.risk).expect("category checked above"))
    })?;
    g.provenance.prune_spec = spec.hash();
    Ok(g)
}

/// [`prune_graph`] plus a reduction report against the unpruned graph.
pub fn apply_prune(
    records: &[ReportRecord],
    q: &Quantizers,
    gaz: &Gazetteer,
    spec: &PruneSpec,
) -> Result<(HeteroGraph, ReductionReport), PruneError> {
    let pruned = prune_graph(records, q, gaz, spec)?;
    let original = build_graph(records, q, gaz)?;
    let report = reduction_report(&original, &pruned, spec);
    Ok((pruned, report))
}
