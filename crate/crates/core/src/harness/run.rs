use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bench::{latency_bench, LatencyStats};
use super::config::ExperimentConfig;
use super::metrics::{compute_metrics, MetricsReport};
use super::HarnessError;
use crate::anchors::{build_anchor_set, infer, AnchorSet};
use crate::explain::{aggregate_importance, stratified_sample, top1_agreement, AgreementReport, ImportanceVector};
use crate::graph::{fit_quantizers, Quantizers};
use crate::models::{ModelConfig, Variant};
use crate::ndiff::{save_checkpoint, ParamStore};
use crate::prune::{cycle_from, fit_original, ComparisonRow, CycleConfig, CycleReport, Dataset};
use crate::synthgen::{
    generate_dataset, split_dataset, to_ndjson, validate_dataset, DatasetMetadata, GenConfig, Gazetteer,
    ReportRecord,
};
use crate::util::{json_hash, sha256_hex};

/// Content hashes of everything a run wrote. Files that carry wall-clock
/// figures are hashed with those columns left out; the figures themselves
/// live under `timing`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    /// Hash of the config with its output directory blanked.
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub stages: Vec<StageRecord>,
    pub artifacts: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    pub timing: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn without_timing(&self) -> Manifest {
        Manifest {
            timing: BTreeMap::new(),
            ..self.clone()
        }
    }

    pub fn load(dir: &Path) -> Result<Manifest, HarnessError> {
        Ok(serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?)
    }
}

pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub metrics: BTreeMap<Variant, MetricsReport>,
    pub latency: BTreeMap<Variant, Vec<LatencyStats>>,
    pub agreement: BTreeMap<Variant, AgreementReport>,
    pub importance: BTreeMap<(Variant, String), Vec<ImportanceVector>>,
    pub prune: BTreeMap<Variant, Vec<CycleReport>>,
}

/// Explain each sample on its own inference graph under one anchor set.
pub fn explain_with_anchors(
    params: &ParamStore<f32>,
    cfg: &ModelConfig,
    samples: &[ReportRecord],
    set: &AnchorSet,
    q: &Quantizers,
    gaz: &Gazetteer,
    seed: u64,
) -> Result<Vec<ImportanceVector>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|rec| {
            let out = infer(params, cfg, rec, set, q, gaz, &mut rng)?;
            Ok(ImportanceVector {
                sample_id: rec.id,
                category: rec.category,
                risk: rec.risk,
                variant: cfg.variant,
                strategy: set.strategy.name().to_string(),
                method: out.method,
                scores: out.importance,
            })
        })
        .collect()
}

struct Recorder {
    dir: PathBuf,
    manifest: Manifest,
    stage: &'static str,
    inputs: Vec<String>,
    outputs: Vec<String>,
    started: Instant,
}

impl Recorder {
    fn begin(&mut self, stage: &'static str, inputs: &[&str]) {
        self.stage = stage;
        self.inputs = inputs.iter().map(|s| s.to_string()).collect();
        self.outputs.clear();
        self.started = Instant::now();
    }

    fn end(&mut self) {
        let secs = self.started.elapsed().as_secs_f64();
        *self.manifest.timing.entry(self.stage.to_string()).or_default() += secs;
        let inputs = std::mem::take(&mut self.inputs);
        let outputs = std::mem::take(&mut self.outputs);
        // Stages that run once per variant extend their earlier record.
        match self.manifest.stages.iter_mut().find(|s| s.name == self.stage) {
            Some(rec) => {
                rec.inputs.extend(inputs.into_iter().filter(|i| !rec.outputs.contains(i)));
                rec.inputs.sort();
                rec.inputs.dedup();
                rec.outputs.extend(outputs);
            }
            None => self.manifest.stages.push(StageRecord {
                name: self.stage.to_string(),
                inputs,
                outputs,
            }),
        }
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), HarnessError> {
        self.put_timed(name, bytes, bytes)
    }

    /// Write `bytes`, but hash `stable`, the same content minus timings.
    fn put_timed(&mut self, name: &str, bytes: &[u8], stable: &[u8]) -> Result<(), HarnessError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.record(name, stable);
        Ok(())
    }

    /// Hash a file some other writer already produced.
    fn adopt(&mut self, name: &str) -> Result<(), HarnessError> {
        let bytes = fs::read(self.dir.join(name))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, stable: &[u8]) {
        self.manifest.artifacts.insert(name.to_string(), sha256_hex(stable));
        self.outputs.push(name.to_string());
    }

    fn write_manifest(&self) -> Result<(), HarnessError> {
        fs::write(self.dir.join("manifest.json"), serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(())
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))
}

fn prune_rows(rows: &[&ComparisonRow], timing: bool) -> Result<Vec<u8>, HarnessError> {
    let mut header = vec!["model", "graph", "edges", "acc", "fp", "fn", "best_epoch"];
    if timing {
        header.push("train_seconds");
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.model.clone(),
                r.graph.clone(),
                r.edges.to_string(),
                format!("{:.2}", r.acc),
                format!("{:.2}", r.fp),
                format!("{:.2}", r.fn_),
                r.best_epoch.to_string(),
            ];
            if timing {
                v.push(format!("{:.2}", r.train_seconds));
            }
            v
        })
        .collect();
    csv_bytes(&header, &body)
}

/// Run every configured stage in order, writing artifacts and the manifest
/// into the output directory. A failing stage still leaves its predecessors'
/// outputs and a manifest naming the stage on disk.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir)?;
    let mut blank = cfg.clone();
    blank.output_dir = PathBuf::new();
    let seeds = BTreeMap::from([
        ("dataset".to_string(), cfg.dataset.seed),
        ("split".to_string(), cfg.seeds.split),
        ("train".to_string(), cfg.seeds.train),
        ("sample".to_string(), cfg.seeds.sample),
        ("anchor".to_string(), cfg.seeds.anchor),
    ]);
    let mut rec = Recorder {
        dir: cfg.output_dir.clone(),
        manifest: Manifest {
            schema_version: cfg.schema_version,
            config_hash: json_hash(&blank),
            seeds,
            stages: Vec::new(),
            artifacts: BTreeMap::new(),
            failed_stage: None,
            timing: BTreeMap::new(),
        },
        stage: "config",
        inputs: Vec::new(),
        outputs: Vec::new(),
        started: Instant::now(),
    };
    cfg.save(&cfg.output_dir.join("config.json"))?;
    match execute(cfg, &mut rec) {
        Ok(mut summary) => {
            rec.write_manifest()?;
            summary.manifest = rec.manifest;
            Ok(summary)
        }
        Err(e) => {
            rec.manifest.failed_stage = Some(rec.stage.to_string());
            rec.write_manifest()?;
            Err(HarnessError::Stage {
                stage: rec.stage,
                message: e.to_string(),
            })
        }
    }
}

fn execute(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<RunSummary, HarnessError> {
    let gaz = Gazetteer::default();
    let bounds = GenConfig::default().bounds;

    rec.begin("generate", &[]);
    let d = &cfg.dataset;
    let records = generate_dataset(d.n, d.year, d.risk_dist, d.seed)?;
    let audit = validate_dataset(&records)?;
    let meta = DatasetMetadata::new(&records, d.year, d.risk_dist, d.seed, &GenConfig::default(), audit)?;
    rec.put("dataset.ndjson", &to_ndjson(&records)?)?;
    rec.put("audit.json", &serde_json::to_vec_pretty(&meta)?)?;
    rec.end();

    rec.begin("split", &["dataset.ndjson"]);
    let split = split_dataset(&records, cfg.split, cfg.labeled_ratio, cfg.seeds.split)?;
    let train_recs: Vec<ReportRecord> = split.train.iter().map(|&i| records[i].clone()).collect();
    let q = fit_quantizers(&train_recs, &bounds)?;
    rec.put("split.json", &serde_json::to_vec(&split)?)?;
    rec.put("quantizers.json", &serde_json::to_vec_pretty(&q)?)?;
    rec.end();

    rec.begin("anchors", &["dataset.ndjson", "split.json", "quantizers.json"]);
    let mut sets = Vec::new();
    for &s in &cfg.anchor_strategies {
        let set = build_anchor_set(s, &train_recs, &q, &bounds, cfg.coverage_k)?;
        rec.put(&format!("anchors/{s}.json"), &set.to_json()?)?;
        sets.push(set);
    }
    let sample_idx = stratified_sample(
        &split.test,
        |i| (records[i].category, records[i].risk),
        cfg.samples_per_cell,
        cfg.seeds.sample,
    );
    let samples: Vec<ReportRecord> = sample_idx.iter().map(|&i| records[i].clone()).collect();
    let ids: Vec<u64> = samples.iter().map(|r| r.id).collect();
    rec.put("samples.json", &serde_json::to_vec(&ids)?)?;
    rec.end();

    let data = Dataset {
        records: &records,
        split: &split,
        quantizers: &q,
        gazetteer: &gaz,
    };
    let mut summary = RunSummary {
        dir: cfg.output_dir.clone(),
        manifest: rec.manifest.clone(),
        metrics: BTreeMap::new(),
        latency: BTreeMap::new(),
        agreement: BTreeMap::new(),
        importance: BTreeMap::new(),
        prune: BTreeMap::new(),
    };
    let mut latency_rows = Vec::new();
    let mut prune_table: Vec<ComparisonRow> = Vec::new();

    for &v in &cfg.variants {
        let (model, mut train) = cfg.profile.configs(v, cfg.seeds.train);
        if let Some(e) = cfg.epochs {
            train.epochs = e;
        }
        let cycle = CycleConfig {
            model,
            train,
            scope: cfg.prune_scope,
            samples_per_cell: cfg.samples_per_cell,
            sample_seed: cfg.seeds.sample,
        };

        rec.begin("train", &["dataset.ndjson", "split.json", "quantizers.json"]);
        let original = fit_original(&data, &cycle)?;
        let params = &original.outcome.params;
        let ckpt = format!("checkpoints/{v}");
        save_checkpoint(
            &cfg.output_dir.join(&ckpt),
            params,
            &json_hash(&(model, train)),
            serde_json::json!({ "model": model, "train": train, "best_epoch": original.outcome.best_epoch }),
        )?;
        rec.adopt(&format!("{ckpt}/params.bin"))?;
        rec.adopt(&format!("{ckpt}/params.json"))?;
        let hist: Vec<Vec<String>> = original
            .outcome
            .history
            .iter()
            .map(|h| vec![h.epoch.to_string(), format!("{:.6}", h.loss), format!("{:.6}", h.val_acc)])
            .collect();
        let timed: Vec<Vec<String>> = original
            .outcome
            .history
            .iter()
            .zip(&hist)
            .map(|(h, row)| {
                let mut r = row.clone();
                r.push(format!("{:.3}", h.seconds));
                r
            })
            .collect();
        rec.put_timed(
            &format!("history_{v}.csv"),
            &csv_bytes(&["epoch", "loss", "val_acc", "seconds"], &timed)?,
            &csv_bytes(&["epoch", "loss", "val_acc"], &hist)?,
        )?;
        let truth: Vec<usize> = split.test.iter().map(|&i| records[i].risk.index()).collect();
        let mut metrics = compute_metrics(&original.eval.predicted, &truth)?;
        rec.end();

        rec.begin("explain", &[&format!("{ckpt}/params.bin"), "samples.json"]);
        let mut runs = Vec::new();
        for set in &sets {
            let vs = explain_with_anchors(params, &model, &samples, set, &q, &gaz, cfg.seeds.anchor)?;
            let name = format!("importance/{v}_{}.csv", set.strategy);
            let path = cfg.output_dir.join(&name);
            fs::create_dir_all(path.parent().expect("nested"))?;
            aggregate_importance(&vs).write_csv(&path)?;
            rec.adopt(&name)?;
            rec.put(&format!("importance/{v}_{}.json", set.strategy), &serde_json::to_vec(&vs)?)?;
            summary.importance.insert((v, set.strategy.name().to_string()), vs.clone());
            runs.push((set.strategy.name().to_string(), vs));
        }
        if runs.len() >= 2 {
            let report = top1_agreement(&runs)?;
            rec.put(&format!("agreement_{v}.json"), &serde_json::to_vec_pretty(&report)?)?;
            summary.agreement.insert(v, report);
        }
        rec.end();

        rec.begin("latency", &[&format!("{ckpt}/params.bin"), "samples.json"]);
        let mut stats = Vec::new();
        for set in &sets {
            let s = latency_bench(set, &samples, params, &model, &q, &gaz, cfg.latency_warmup, cfg.seeds.anchor)?;
            latency_rows.push((v, s.clone()));
            metrics.latency.insert(s.strategy.clone(), s.clone());
            stats.push(s);
        }
        summary.latency.insert(v, stats);
        let mut stable = metrics.clone();
        stable.latency.clear();
        rec.put_timed(
            &format!("metrics_{v}.json"),
            &serde_json::to_vec_pretty(&metrics)?,
            &serde_json::to_vec_pretty(&stable)?,
        )?;
        summary.metrics.insert(v, metrics);
        rec.end();

        if !cfg.prune_strategies.is_empty() {
            rec.begin("prune", &[&format!("{ckpt}/params.bin"), "dataset.ndjson", "split.json"]);
            let mut reports = Vec::new();
            for &s in &cfg.prune_strategies {
                let r = cycle_from(&data, s, &cycle, &original)?;
                let stem = format!("prune/{v}_{}", s.name());
                rec.put(&format!("{stem}_spec.json"), &serde_json::to_vec_pretty(&r.spec)?)?;
                rec.put(&format!("{stem}_reduction.json"), &serde_json::to_vec_pretty(&r.reduction)?)?;
                if let Some(t) = &r.table {
                    let name = format!("{stem}_importance.csv");
                    let path = cfg.output_dir.join(&name);
                    t.write_csv(&path)?;
                    rec.adopt(&name)?;
                }
                if reports.is_empty() {
                    prune_table.push(r.original.clone());
                }
                prune_table.push(r.pruned.clone());
                reports.push(r);
            }
            summary.prune.insert(v, reports);
            rec.end();
        }
    }

    rec.begin("report", &[]);
    let lat: Vec<Vec<String>> = latency_rows
        .iter()
        .map(|(v, s)| {
            vec![
                v.to_string(),
                s.strategy.clone(),
                s.n.to_string(),
                format!("{:.4}", s.mean_ms),
                format!("{:.4}", s.std_ms),
                format!("{:.4}", s.median_ms),
            ]
        })
        .collect();
    let lat_stable: Vec<Vec<String>> = lat.iter().map(|r| r[..3].to_vec()).collect();
    rec.put_timed(
        "latency.csv",
        &csv_bytes(&["variant", "strategy", "n", "mean_ms", "std_ms", "median_ms"], &lat)?,
        &csv_bytes(&["variant", "strategy", "n"], &lat_stable)?,
    )?;
    if !prune_table.is_empty() {
        let rows: Vec<&ComparisonRow> = prune_table.iter().collect();
        rec.put_timed("prune_comparison.csv", &prune_rows(&rows, true)?, &prune_rows(&rows, false)?)?;
    }
    rec.end();
    Ok(summary)
}
