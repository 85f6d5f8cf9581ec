use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::select::{build_coverage_anchors, build_median_anchor};
use super::synthetic::{build_synthetic_anchor, fit_prototype, Prototype};
use super::AnchorError;
use crate::explain::{attention_importance, gradient_importance, Method};
use crate::graph::{build_graph, HeteroGraph, NodeType, Quantizers};
use crate::models::{predict, ModelConfig};
use crate::ndiff::ParamStore;
use crate::synthgen::{Category, Gazetteer, Range, ReportRecord, Risk};
use crate::util::json_hash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStrategy {
    SingleNode,
    Synthetic,
    Median,
    Coverage,
}

impl AnchorStrategy {
    pub const ALL: [AnchorStrategy; 4] = [
        AnchorStrategy::SingleNode,
        AnchorStrategy::Synthetic,
        AnchorStrategy::Median,
        AnchorStrategy::Coverage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnchorStrategy::SingleNode => "single_node",
            AnchorStrategy::Synthetic => "synthetic",
            AnchorStrategy::Median => "median",
            AnchorStrategy::Coverage => "coverage",
        }
    }
}

impl fmt::Display for AnchorStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AnchorStrategy {
    type Err = AnchorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('-', "_");
        AnchorStrategy::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or(AnchorError::UnknownStrategy(s))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorProvenance {
    pub train_hash: String,
    pub quantizer_hash: String,
}

/// Anchors of one strategy for every category seen in training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub strategy: AnchorStrategy,
    pub k: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub anchors: BTreeMap<Category, Vec<ReportRecord>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub prototypes: BTreeMap<Category, Prototype>,
    /// Categories with fewer than `k` distinct coverage anchors.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub shortfall: Vec<Category>,
    pub provenance: AnchorProvenance,
}

/// Id given to generated anchors, far from any dataset id.
pub const SYNTHETIC_ID: u64 = u64::MAX;

pub fn build_anchor_set(
    strategy: AnchorStrategy,
    train: &[ReportRecord],
    q: &Quantizers,
    bounds: &[Range; 7],
    k: usize,
) -> Result<AnchorSet, AnchorError> {
    let mut cats: Vec<Category> = train.iter().map(|r| r.category).collect();
    cats.sort();
    cats.dedup();
    let mut set = AnchorSet {
        strategy,
        k: match strategy {
            AnchorStrategy::SingleNode => 0,
            AnchorStrategy::Synthetic | AnchorStrategy::Median => 1,
            AnchorStrategy::Coverage => k,
        },
        anchors: BTreeMap::new(),
        prototypes: BTreeMap::new(),
        shortfall: Vec::new(),
        provenance: AnchorProvenance {
            train_hash: json_hash(&train),
            quantizer_hash: json_hash(q),
        },
    };
    for c in cats {
        match strategy {
            AnchorStrategy::SingleNode => {}
            AnchorStrategy::Median => {
                set.anchors.insert(c, vec![build_median_anchor(train, c, q)?]);
            }
            AnchorStrategy::Coverage => {
                let (picked, short) = build_coverage_anchors(train, c, k, q)?;
                if short {
                    set.shortfall.push(c);
                }
                set.anchors.insert(c, picked);
            }
            AnchorStrategy::Synthetic => {
                set.prototypes.insert(c, fit_prototype(train, c, bounds)?);
            }
        }
    }
    Ok(set)
}

impl AnchorSet {
    pub fn to_json(&self) -> Result<Vec<u8>, AnchorError> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), AnchorError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<AnchorSet, AnchorError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Anchor records to merge with a report of category `c`; synthetic ones
    /// are generated on the spot.
    pub fn anchors_for<R: Rng + ?Sized>(&self, c: Category, rng: &mut R) -> Result<Vec<ReportRecord>, AnchorError> {
        match self.strategy {
            AnchorStrategy::SingleNode => Ok(Vec::new()),
            AnchorStrategy::Median | AnchorStrategy::Coverage => {
                self.anchors.get(&c).cloned().ok_or(AnchorError::MissingCategory(c))
            }
            AnchorStrategy::Synthetic => {
                let p = self.prototypes.get(&c).ok_or(AnchorError::MissingCategory(c))?;
                Ok(vec![build_synthetic_anchor(p, SYNTHETIC_ID, rng)?])
            }
        }
    }
}

/// The report's star plus its category's anchor stars, with the report at
/// index 0 as the only scored node.
pub fn assemble_inference_graph<R: Rng + ?Sized>(
    report: &ReportRecord,
    set: &AnchorSet,
    q: &Quantizers,
    gaz: &Gazetteer,
    rng: &mut R,
) -> Result<HeteroGraph, AnchorError> {
    let mut recs = Vec::with_capacity(1 + set.k);
    recs.push(report.clone());
    recs.extend(set.anchors_for(report.category, rng)?);
    let mut g = build_graph(&recs, q, gaz)?;
    g.target = Some(0);
    Ok(g)
}

/// Result of scoring one incoming report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub risk: Risk,
    pub probabilities: [f64; 3],
    pub importance: BTreeMap<NodeType, f64>,
    pub method: Method,
    pub strategy: AnchorStrategy,
    /// Graph assembly plus forward pass.
    pub latency_ms: f64,
}

/// Assemble, score and explain a single report.
#[allow(clippy::too_many_arguments)]
pub fn infer<R: Rng + ?Sized>(
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    report: &ReportRecord,
    set: &AnchorSet,
    q: &Quantizers,
    gaz: &Gazetteer,
    rng: &mut R,
) -> Result<Inference, AnchorError> {
    let t0 = Instant::now();
    let g = assemble_inference_graph(report, set, q, gaz, rng)?;
    let pred = predict(params, cfg, &g)?;
    let latency_ms = t0.elapsed().as_secs_f64() * 1e3;
    let target = g.target.expect("set by assembly");
    let method = Method::for_variant(cfg.variant);
    let importance = match method {
        Method::Attention => attention_importance(&pred.attention, &g, target)?,
        Method::Gradient => gradient_importance(params, cfg, &g)?.swap_remove(target),
    };
    let probabilities = pred.probabilities(target);
    Ok(Inference {
        risk: Risk::ALL[pred.classes()[target]],
        probabilities,
        importance,
        method,
        strategy: set.strategy,
        latency_ms,
    })
}
