use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExplainError;
use crate::graph::{HeteroGraph, NodeType};
use crate::models::{forward, predict, AttentionRecord, ModelConfig, Variant};
use crate::ndiff::{Bound, ParamStore, Tape, Tensor};
use crate::synthgen::{Category, Risk};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Sensor,
    Context,
}

/// Normalization group of an eligible type; `None` for structural types.
pub fn group_of(t: NodeType) -> Option<Group> {
    if t.is_sensor() {
        Some(Group::Sensor)
    } else if t.is_context() {
        Some(Group::Context)
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Attention,
    Gradient,
}

impl Method {
    /// Attention where the variant has heads, gradients otherwise.
    pub fn for_variant(v: Variant) -> Method {
        if v.heads().is_empty() {
            Method::Gradient
        } else {
            Method::Attention
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub sample_id: u64,
    pub category: Category,
    pub risk: Risk,
    pub variant: Variant,
    pub strategy: String,
    pub method: Method,
    /// Percentages per eligible type present in the star; each group sums to 100.
    pub scores: BTreeMap<NodeType, f64>,
}

impl ImportanceVector {
    /// Highest-scoring type; ties go to the lexicographically first name.
    pub fn top1(&self) -> Option<NodeType> {
        super::table::rank(&self.scores).first().copied()
    }

    pub fn group_sum(&self, g: Group) -> f64 {
        self.scores.iter().filter(|(t, _)| group_of(**t) == Some(g)).map(|(_, v)| v).sum()
    }
}

/// Scale each group of raw scores to 100. A group whose raw scores are all
/// zero is split evenly.
pub fn normalize_groups(raw: &BTreeMap<NodeType, f64>) -> BTreeMap<NodeType, f64> {
    let mut out = BTreeMap::new();
    for g in [Group::Sensor, Group::Context] {
        let members: Vec<(NodeType, f64)> = raw
            .iter()
            .filter(|(t, _)| group_of(**t) == Some(g))
            .map(|(t, v)| (*t, v.max(0.0)))
            .collect();
        let total: f64 = members.iter().map(|(_, v)| v).sum();
        for (t, v) in &members {
            let pct = if total > 0.0 { 100.0 * v / total } else { 100.0 / members.len() as f64 };
            out.insert(*t, pct);
        }
    }
    out
}

fn eligible_present(g: &HeteroGraph, report: usize) -> Vec<NodeType> {
    g.neighbor_types(report).iter().filter(|t| t.is_eligible()).collect()
}

/// Importance of report `report`'s neighbor types from a finished forward
/// pass. Each type's raw score is the mean α over the heads allowed to see it.
pub fn attention_importance(
    record: &AttentionRecord,
    g: &HeteroGraph,
    report: usize,
) -> Result<BTreeMap<NodeType, f64>, ExplainError> {
    if record.is_empty() {
        return Err(ExplainError::NoAttention);
    }
    if report >= g.n_reports() {
        return Err(ExplainError::Report(report));
    }
    let types = eligible_present(g, report);
    if types.is_empty() {
        return Err(ExplainError::NoNeighbors(g.reports[report].record_id));
    }
    let mut raw = BTreeMap::new();
    for t in types {
        let slot = t.slot().expect("neighbor");
        let seen: Vec<f64> = record
            .iter()
            .filter(|h| h.head.allowed().contains(t))
            .map(|h| h.alpha[report][slot])
            .collect();
        let score = if seen.is_empty() { 0.0 } else { seen.iter().sum::<f64>() / seen.len() as f64 };
        raw.insert(t, score);
    }
    Ok(normalize_groups(&raw))
}

/// `Σ |∂ŷ/∂h| · |h|` per neighbor, where ŷ is the predicted-class logit and
/// `h` the neighbor's first-layer embedding, for every report of `g`.
pub fn gradient_importance(
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    g: &HeteroGraph,
) -> Result<Vec<BTreeMap<NodeType, f64>>, ExplainError> {
    let n = g.n_reports();
    let mut tape: Tape<f32> = Tape::new();
    let p = Bound::bind(&mut tape, params, true);
    let out = forward(&mut tape, &p, cfg, g, false, &mut ChaCha8Rng::seed_from_u64(0))?;
    let logits = tape.value(out.logits).clone();
    let mut pick = Tensor::zeros(&[n, 3]);
    for i in 0..n {
        let row = logits.row(i);
        let c = (0..3).fold(0, |b, j| if row[j] > row[b] { j } else { b });
        pick.data_mut()[i * 3 + c] = 1.0;
    }
    let pick = tape.constant(pick);
    let chosen = tape.mul(out.logits, pick)?;
    let target = tape.sum_all(chosen)?;
    let grads = tape.backward(target)?;

    let mut result = Vec::with_capacity(n);
    for r in 0..n {
        let types = eligible_present(g, r);
        if types.is_empty() {
            return Err(ExplainError::NoNeighbors(g.reports[r].record_id));
        }
        let mut raw = BTreeMap::new();
        for t in types {
            let node = g.slots[r][t.slot().expect("neighbor")].expect("present") as usize;
            let score = match out.h1[t.index()] {
                Some(v) => match grads.get(v) {
                    Ok(gr) => gr
                        .row(node)
                        .iter()
                        .zip(tape.value(v).row(node))
                        .map(|(a, b)| (a.abs() * b.abs()) as f64)
                        .sum(),
                    Err(_) => 0.0,
                },
                None => 0.0,
            };
            raw.insert(t, score);
        }
        result.push(normalize_groups(&raw));
    }
    Ok(result)
}

const CHUNK: usize = 256;

/// Importance vectors for `reports` of `g`, explained in closed chunks.
pub fn explain_reports(
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    g: &HeteroGraph,
    reports: &[usize],
    method: Method,
    strategy: &str,
) -> Result<Vec<ImportanceVector>, ExplainError> {
    let mut out = Vec::with_capacity(reports.len());
    for chunk in reports.chunks(CHUNK) {
        let batch = g.closed_batch(chunk);
        let scores = match method {
            Method::Attention => {
                let pred = predict(params, cfg, &batch)?;
                (0..batch.n_reports())
                    .map(|i| attention_importance(&pred.attention, &batch, i))
                    .collect::<Result<Vec<_>, _>>()?
            }
            Method::Gradient => gradient_importance(params, cfg, &batch)?,
        };
        for (i, s) in scores.into_iter().enumerate() {
            let info = &batch.reports[i];
            out.push(ImportanceVector {
                sample_id: info.record_id,
                category: info.category,
                risk: info.risk,
                variant: cfg.variant,
                strategy: strategy.to_string(),
                method,
                scores: s,
            });
        }
    }
    Ok(out)
}
