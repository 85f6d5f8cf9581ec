use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use riskgraph::anchors::{build_anchor_set, infer, AnchorSet, AnchorStrategy};
use riskgraph::explain::ImportanceTable;
use riskgraph::graph::{build_graph, fit_quantizers, save_graph, Quantizers};
use riskgraph::harness::{export_report, latency_bench, run_experiment, ExperimentConfig};
use riskgraph::models::{ModelConfig, TrainProfile, Variant};
use riskgraph::ndiff::{load_checkpoint, save_checkpoint};
use riskgraph::prune::{derive, fit_original, prune_retrain_cycle, CycleConfig, Dataset, PruneScope, Strategy};
use riskgraph::synthgen::{
    generate_dataset, metadata_path, read_ndjson, split_dataset, validate_dataset, write_metadata, write_ndjson,
    DatasetMetadata, GenConfig, Gazetteer, ReportRecord, Risk, Split,
};
use riskgraph::util::json_hash;

#[derive(Parser)]
#[command(name = "riskgraph", version, about = "Risk classification of incident reports on heterogeneous graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic report dataset (NDJSON plus a metadata file).
    Gen {
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 2024)]
        year: i32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.35,0.40")]
        risk_dist: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit a dataset against the alert rules and structural constraints.
    Validate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Build and save the full graph for a dataset.
    BuildGraph {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant and save its checkpoint.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Derive prune specs and run prune-retrain cycles
    #[command(subcommand)]
    Prune(PruneCmd),
    /// Build anchor sets for inductive inference
    #[command(subcommand)]
    Anchors(AnchorsCmd),
    /// Score and explain one report of a dataset.
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        anchors: PathBuf,
        /// Defaults to `<ckpt>/quantizers.json`.
        #[arg(long)]
        quantizers: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        id: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write table and plot-data files for a finished run.
    Export {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Per-sample inference latency on a finished run's test reports.
    Bench {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        strategy: AnchorStrategy,
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Defaults to the run's first variant.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
    },
}

#[derive(Subcommand)]
enum PruneCmd {
    /// Derive a prune spec from an importance table (CSV or JSON).
    Derive {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value = "sensors_and_drainage")]
        scope: PruneScope,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train, explain, prune, retrain and compare.
    Cycle {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        strategy: Strategy,
        #[arg(long, default_value = "sensors_and_drainage")]
        scope: PruneScope,
        #[arg(long, default_value_t = 100)]
        samples_per_cell: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnchorsCmd {
    /// Build an anchor set from a dataset's training split.
    Build {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        strategy: AnchorStrategy,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
    #[arg(long, default_value_t = 0.2)]
    labeled_ratio: f64,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "inductive")]
    variant: Variant,
    #[arg(long, default_value = "desk", value_parser = parse_profile)]
    profile: TrainProfile,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_profile(s: &str) -> Result<TrainProfile, String> {
    TrainProfile::parse(s).ok_or_else(|| format!("unknown profile {s:?}"))
}

struct Prepared {
    records: Vec<ReportRecord>,
    split: Split,
    q: Quantizers,
}

impl DataArgs {
    fn prepare(&self) -> Result<Prepared> {
        let records = read_ndjson(&self.data).with_context(|| format!("reading {}", self.data.display()))?;
        let split = split_dataset(&records, [0.8, 0.1, 0.1], self.labeled_ratio, self.split_seed)?;
        let train: Vec<ReportRecord> = split.train.iter().map(|&i| records[i].clone()).collect();
        let q = fit_quantizers(&train, &GenConfig::default().bounds)?;
        Ok(Prepared { records, split, q })
    }
}

impl Prepared {
    fn dataset<'a>(&'a self, gaz: &'a Gazetteer) -> Dataset<'a> {
        Dataset {
            records: &self.records,
            split: &self.split,
            quantizers: &self.q,
            gazetteer: gaz,
        }
    }

    fn train_records(&self) -> Vec<ReportRecord> {
        self.split.train.iter().map(|&i| self.records[i].clone()).collect()
    }
}

impl ModelArgs {
    fn cycle(&self, scope: PruneScope, samples_per_cell: usize) -> CycleConfig {
        let (model, mut train) = self.profile.configs(self.variant, self.seed);
        if let Some(e) = self.epochs {
            train.epochs = e;
        }
        CycleConfig {
            model,
            train,
            scope,
            samples_per_cell,
            sample_seed: 0,
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[derive(Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
}

fn main() -> Result<()> {
    let gaz = Gazetteer::default();
    match Cli::parse().cmd {
        Cmd::Gen {
            n,
            year,
            seed,
            risk_dist,
            out,
        } => {
            let dist: [f64; 3] = risk_dist
                .try_into()
                .map_err(|_| anyhow::anyhow!("--risk-dist needs three values"))?;
            let records = generate_dataset(n, year, dist, seed)?;
            let audit = validate_dataset(&records)?;
            let meta = DatasetMetadata::new(&records, year, dist, seed, &GenConfig::default(), audit)?;
            write_ndjson(&out, &records)?;
            write_metadata(&metadata_path(&out), &meta)?;
            println!(
                "{} records, rule audit {:.2}%, sha256 {}",
                meta.n, meta.audit.overall_pct, meta.data_sha256
            );
        }
        Cmd::Validate { data } => {
            let records = read_ndjson(&data)?;
            let audit = validate_dataset(&records)?;
            println!("{}", serde_json::to_string_pretty(&audit)?);
        }
        Cmd::BuildGraph { data, out } => {
            let p = data.prepare()?;
            let mut g = build_graph(&p.records, &p.q, &gaz)?;
            g.labeled = p.split.labeled_mask(p.records.len());
            save_graph(&g, &out)?;
            write_json(&out.join("quantizers.json"), &p.q)?;
            write_json(&out.join("split.json"), &p.split)?;
            println!("{}", serde_json::to_string_pretty(&g.stats())?);
        }
        Cmd::Train { data, model, out } => {
            let p = data.prepare()?;
            let cfg = model.cycle(PruneScope::default(), 0);
            let t = fit_original(&p.dataset(&gaz), &cfg)?;
            save_checkpoint(
                &out,
                &t.outcome.params,
                &json_hash(&(cfg.model, cfg.train)),
                serde_json::json!({ "model": cfg.model, "train": cfg.train, "best_epoch": t.outcome.best_epoch }),
            )?;
            write_json(&out.join("quantizers.json"), &p.q)?;
            write_json(&out.join("history.json"), &t.outcome.history)?;
            println!(
                "test accuracy {:.2}%, FP_high {:.2}%, FN_high {:.2}%, best epoch {}, {:.1}s",
                100.0 * t.eval.accuracy,
                t.eval.fp_high(),
                t.eval.fn_high(),
                t.outcome.best_epoch,
                t.outcome.seconds
            );
        }
        Cmd::Prune(PruneCmd::Derive {
            table,
            strategy,
            scope,
            out,
        }) => {
            let t = if table.extension().is_some_and(|e| e == "json") {
                ImportanceTable::read_json(&table)?
            } else {
                ImportanceTable::read_csv(&table)?
            };
            let spec = derive(&t, strategy, scope)?;
            spec.write_json(&out)?;
            for c in spec.categories() {
                for r in Risk::ALL {
                    let removed: Vec<&str> = spec.removed(c, *r)?.iter().map(|t| t.name()).collect();
                    println!("{c} / {r}: removed {removed:?}");
                }
            }
        }
        Cmd::Prune(PruneCmd::Cycle {
            data,
            model,
            strategy,
            scope,
            samples_per_cell,
            out,
        }) => {
            let p = data.prepare()?;
            let cfg = model.cycle(scope, samples_per_cell);
            let r = prune_retrain_cycle(&p.dataset(&gaz), strategy, &cfg)?;
            std::fs::create_dir_all(&out)?;
            r.write_csv(&out.join("comparison.csv"))?;
            r.spec.write_json(&out.join("spec.json"))?;
            write_json(&out.join("reduction.json"), &r.reduction)?;
            if let Some(t) = &r.table {
                t.write_csv(&out.join("importance.csv"))?;
            }
            println!("edge reduction {:.1}%", r.reduction.reduction_pct);
            for row in [&r.original, &r.pruned] {
                println!(
                    "{:<16} edges {:>8}  acc {:6.2}%  FP {:6.2}%  FN {:6.2}%",
                    row.graph, row.edges, row.acc, row.fp, row.fn_
                );
            }
        }
        Cmd::Anchors(AnchorsCmd::Build { data, strategy, k, out }) => {
            let p = data.prepare()?;
            let set = build_anchor_set(strategy, &p.train_records(), &p.q, &GenConfig::default().bounds, k)?;
            set.save(&out)?;
            if !set.shortfall.is_empty() {
                eprintln!("fewer than {k} distinct anchors for {:?}", set.shortfall);
            }
        }
        Cmd::Infer {
            ckpt,
            anchors,
            quantizers,
            data,
            id,
            seed,
        } => {
            let (params, manifest) = load_checkpoint(&ckpt)?;
            let meta: CheckpointMeta = serde_json::from_value(manifest.metadata)?;
            let q: Quantizers = read_json(&quantizers.unwrap_or_else(|| ckpt.join("quantizers.json")))?;
            let set = AnchorSet::load(&anchors)?;
            let records = read_ndjson(&data)?;
            let Some(rec) = records.iter().find(|r| r.id == id) else {
                bail!("no record with id {id}");
            };
            let out = infer(&params, &meta.model, rec, &set, &q, &gaz, &mut ChaCha8Rng::seed_from_u64(seed))?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Cmd::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = run_experiment(&cfg)?;
            for (v, m) in &s.metrics {
                println!("{v}: test accuracy {:.2}%", m.accuracy);
            }
            println!("outputs in {}", s.dir.display());
        }
        Cmd::Export { dir } => {
            let b = export_report(&dir)?;
            for f in b.tables.iter().chain(&b.plots) {
                println!("{}", f.display());
            }
        }
        Cmd::Bench {
            dir,
            strategy,
            n,
            variant,
            warmup,
        } => {
            let cfg = ExperimentConfig::load(&dir.join("config.json"))?;
            let variant = variant.or(cfg.variants.first().copied()).context("run has no variants")?;
            let (params, manifest) = load_checkpoint(&dir.join("checkpoints").join(variant.name()))?;
            let meta: CheckpointMeta = serde_json::from_value(manifest.metadata)?;
            let q: Quantizers = read_json(&dir.join("quantizers.json"))?;
            let split: Split = read_json(&dir.join("split.json"))?;
            let records = read_ndjson(&dir.join("dataset.ndjson"))?;
            let samples: Vec<ReportRecord> = split.test.iter().take(n).map(|&i| records[i].clone()).collect();
            let set_path = dir.join("anchors").join(format!("{strategy}.json"));
            let set = if set_path.exists() {
                AnchorSet::load(&set_path)?
            } else {
                let train: Vec<ReportRecord> = split.train.iter().map(|&i| records[i].clone()).collect();
                build_anchor_set(strategy, &train, &q, &GenConfig::default().bounds, cfg.coverage_k)?
            };
            let s = latency_bench(&set, &samples, &params, &meta.model, &q, &gaz, warmup, cfg.seeds.anchor)?;
            println!(
                "{} n={} mean {:.3} ms, std {:.3} ms, median {:.3} ms",
                s.strategy, s.n, s.mean_ms, s.std_ms, s.median_ms
            );
        }
    }
    Ok(())
}
