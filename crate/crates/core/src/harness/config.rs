use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::anchors::AnchorStrategy;
use crate::models::{TrainProfile, Variant};
use crate::prune::{PruneScope, Strategy};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n: usize,
    pub year: i32,
    pub risk_dist: [f64; 3],
    pub seed: u64,
}

/// Seeds of every stochastic stage after generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub split: u64,
    pub train: u64,
    /// Stratified sampling of explained and benchmarked reports.
    pub sample: u64,
    /// Synthetic anchor draws.
    pub anchor: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            split: 42,
            train: 0,
            sample: 0,
            anchor: 0,
        }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}
fn default_samples() -> usize {
    100
}
fn default_warmup() -> usize {
    10
}
fn default_k() -> usize {
    5
}
fn default_labeled() -> f64 {
    0.2
}
fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub dataset: DatasetSpec,
    pub variants: Vec<Variant>,
    pub profile: TrainProfile,
    /// Overrides the profile's epoch budget.
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default = "default_labeled")]
    pub labeled_ratio: f64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub seeds: Seeds,
    pub anchor_strategies: Vec<AnchorStrategy>,
    #[serde(default = "default_k")]
    pub coverage_k: usize,
    /// Empty skips the prune/retrain stage.
    #[serde(default)]
    pub prune_strategies: Vec<Strategy>,
    #[serde(default)]
    pub prune_scope: PruneScope,
    #[serde(default = "default_samples")]
    pub samples_per_cell: usize,
    #[serde(default = "default_warmup")]
    pub latency_warmup: usize,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    /// 5,000 records, inductive, 10 epochs, 10 samples per cell.
    pub fn desk(output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            dataset: DatasetSpec {
                n: 5000,
                year: 2024,
                risk_dist: [0.25, 0.35, 0.40],
                seed: 0,
            },
            variants: vec![Variant::Inductive],
            profile: TrainProfile::Desk,
            epochs: None,
            labeled_ratio: default_labeled(),
            split: default_split(),
            seeds: Seeds::default(),
            anchor_strategies: AnchorStrategy::ALL.to_vec(),
            coverage_k: default_k(),
            prune_strategies: vec![Strategy::BottomExcluded],
            prune_scope: PruneScope::default(),
            samples_per_cell: 10,
            latency_warmup: default_warmup(),
            output_dir: output_dir.into(),
        }
    }

    /// Full-scale setup: 50,040 records, every variant and strategy.
    pub fn paper(output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            dataset: DatasetSpec {
                n: 50_040,
                year: 2024,
                risk_dist: [0.25, 0.35, 0.40],
                seed: 0,
            },
            variants: Variant::ALL.to_vec(),
            profile: TrainProfile::PruningBench,
            prune_strategies: vec![Strategy::BottomExcluded, Strategy::TopOnly],
            samples_per_cell: default_samples(),
            ..Self::desk(output_dir)
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_slice(&std::fs::read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.dataset.n == 0 {
            return bad("dataset size must be positive".into());
        }
        if self.variants.is_empty() {
            return bad("no model variants".into());
        }
        if self.anchor_strategies.is_empty() {
            return bad("no anchor strategies".into());
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            return bad("duplicate variants".into());
        }
        let mut seen = self.anchor_strategies.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.anchor_strategies.len() {
            return bad("duplicate anchor strategies".into());
        }
        if self.samples_per_cell == 0 {
            return bad("samples per cell must be positive".into());
        }
        if self.coverage_k == 0 {
            return bad("coverage k must be positive".into());
        }
        let mut seen = self.prune_strategies.clone();
        seen.dedup();
        if seen.len() != self.prune_strategies.len() || (seen.len() == 2 && seen[0] == seen[1]) {
            return bad("duplicate prune strategies".into());
        }
        if self.epochs == Some(0) {
            return bad("epochs must be positive".into());
        }
        Ok(())
    }
}
