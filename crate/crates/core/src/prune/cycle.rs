use std::path::Path;

use serde::{Deserialize, Serialize};

use super::apply::{reduction_report, ReductionReport};
use super::spec::{derive, PruneScope, PruneSpec, Strategy};
use super::PruneError;
use crate::explain::{aggregate_importance, explain_reports, stratified_sample, ImportanceTable, Method};
use crate::graph::{build_graph, HeteroGraph, Quantizers};
use crate::models::{evaluate, train, Evaluation, ModelConfig, TrainConfig, TrainOutcome};
use crate::ndiff::ParamStore;
use crate::synthgen::{Gazetteer, ReportRecord, Split};

/// A dataset ready for graph building.
#[derive(Clone, Copy)]
pub struct Dataset<'a> {
    pub records: &'a [ReportRecord],
    pub split: &'a Split,
    pub quantizers: &'a Quantizers,
    pub gazetteer: &'a Gazetteer,
}

impl Dataset<'_> {
    pub fn graph(&self, spec: Option<&PruneSpec>) -> Result<HeteroGraph, PruneError> {
        let mut g = match spec {
            Some(s) => super::prune_graph(self.records, self.quantizers, self.gazetteer, s)?,
            None => build_graph(self.records, self.quantizers, self.gazetteer)?,
        };
        g.labeled = self.split.labeled_mask(self.records.len());
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub scope: PruneScope,
    /// Training reports explained per (category, risk) cell.
    pub samples_per_cell: usize,
    pub sample_seed: u64,
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub graph: String,
    pub edges: usize,
    pub acc: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub train_seconds: f64,
    pub best_epoch: usize,
}

impl ComparisonRow {
    fn new(model: &ModelConfig, graph: &str, g: &HeteroGraph, ev: &Evaluation, out: &TrainOutcome) -> Self {
        ComparisonRow {
            model: model.variant.to_string(),
            graph: graph.to_string(),
            edges: g.stats().total_edges,
            acc: 100.0 * ev.accuracy,
            fp: ev.fp_high(),
            fn_: ev.fn_high(),
            train_seconds: out.seconds,
            best_epoch: out.best_epoch,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub original: ComparisonRow,
    pub pruned: ComparisonRow,
    pub spec: PruneSpec,
    pub reduction: ReductionReport,
    /// Explanations behind the spec; absent when the spec was given.
    pub table: Option<ImportanceTable>,
}

impl CycleReport {
    /// Rows `model, graph, edges, acc, fp, fn, train_seconds`.
    pub fn write_csv(&self, path: &Path) -> Result<(), PruneError> {
        write_rows(path, &[&self.original, &self.pruned])
    }
}

pub fn write_rows(path: &Path, rows: &[&ComparisonRow]) -> Result<(), PruneError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "graph", "edges", "acc", "fp", "fn", "train_seconds"])?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.graph.clone(),
            r.edges.to_string(),
            format!("{:.2}", r.acc),
            format!("{:.2}", r.fp),
            format!("{:.2}", r.fn_),
            format!("{:.2}", r.train_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Importance table from a stratified sample of training reports.
pub fn explain_sample(
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    g: &HeteroGraph,
    data: &Dataset<'_>,
    per_cell: usize,
    seed: u64,
) -> Result<ImportanceTable, PruneError> {
    let sample = stratified_sample(
        &data.split.train,
        |i| (data.records[i].category, data.records[i].risk),
        per_cell,
        seed,
    );
    let vs = explain_reports(params, cfg, g, &sample, Method::for_variant(cfg.variant), "transductive")?;
    Ok(aggregate_importance(&vs))
}

/// A model trained on one graph and scored on the test split.
pub struct Trained {
    pub graph: HeteroGraph,
    pub outcome: TrainOutcome,
    pub eval: Evaluation,
}

/// Train on the unpruned graph.
pub fn fit_original(data: &Dataset<'_>, cfg: &CycleConfig) -> Result<Trained, PruneError> {
    fit(data, cfg, None)
}

fn fit(data: &Dataset<'_>, cfg: &CycleConfig, spec: Option<&PruneSpec>) -> Result<Trained, PruneError> {
    let graph = data.graph(spec)?;
    let outcome = train(&cfg.model, &cfg.train, &graph, &data.split.train, &data.split.val)?;
    let eval = evaluate(&outcome.params, &cfg.model, &graph, &data.split.test)?;
    Ok(Trained { graph, outcome, eval })
}

fn finish(
    cfg: &CycleConfig,
    original: &Trained,
    spec: PruneSpec,
    table: Option<ImportanceTable>,
    data: &Dataset<'_>,
) -> Result<CycleReport, PruneError> {
    let pruned = fit(data, cfg, Some(&spec))?;
    let reduction = reduction_report(&original.graph, &pruned.graph, &spec);
    Ok(CycleReport {
        original: ComparisonRow::new(&cfg.model, "original", &original.graph, &original.eval, &original.outcome),
        pruned: ComparisonRow::new(&cfg.model, spec.strategy.name(), &pruned.graph, &pruned.eval, &pruned.outcome),
        spec,
        reduction,
        table,
    })
}

/// Train on the original graph, explain a training sample, derive a spec,
/// rebuild, retrain from scratch with the same configuration and compare
/// both models on the test split.
pub fn prune_retrain_cycle(data: &Dataset<'_>, strategy: Strategy, cfg: &CycleConfig) -> Result<CycleReport, PruneError> {
    let original = fit(data, cfg, None)?;
    cycle_from(data, strategy, cfg, &original)
}

/// The cycle on top of an already trained original model.
pub fn cycle_from(
    data: &Dataset<'_>,
    strategy: Strategy,
    cfg: &CycleConfig,
    original: &Trained,
) -> Result<CycleReport, PruneError> {
    let table = explain_sample(
        &original.outcome.params,
        &cfg.model,
        &original.graph,
        data,
        cfg.samples_per_cell,
        cfg.sample_seed,
    )?;
    let spec = derive(&table, strategy, cfg.scope)?;
    finish(cfg, original, spec, Some(table), data)
}

/// The same comparison with a fixed spec instead of a derived one.
pub fn retrain_with_spec(data: &Dataset<'_>, spec: PruneSpec, cfg: &CycleConfig) -> Result<CycleReport, PruneError> {
    let original = fit(data, cfg, None)?;
    finish(cfg, &original, spec, None, data)
}
