use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::HarnessError;
use crate::explain::{rank, AgreementReport, ImportanceTable, Rate};

/// Files written by [`export_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExportBundle {
    pub dir: PathBuf,
    pub tables: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub manifest: PathBuf,
}

type Rows = Vec<Vec<String>>;

fn write(path: &Path, header: &[&str], rows: &Rows) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read(path: &Path) -> Result<(Vec<String>, Rows), HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<Result<Rows, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize, HarnessError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| HarnessError::Config(format!("column {name} missing")))
}

/// Consolidate a finished run into `<dir>/export`: one CSV per table analog
/// (latency, agreement, importance, pruning) and plot series as
/// `x, y, series` triples.
pub fn export_report(dir: &Path) -> Result<ExportBundle, HarnessError> {
    let cfg_path = dir.join("config.json");
    if !cfg_path.exists() {
        return Err(HarnessError::Missing(vec!["config.json".into()]));
    }
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let mut required = vec!["manifest.json".to_string(), "latency.csv".to_string()];
    for v in &cfg.variants {
        required.push(format!("history_{v}.csv"));
        required.push(format!("metrics_{v}.json"));
        for s in &cfg.anchor_strategies {
            required.push(format!("importance/{v}_{s}.csv"));
        }
        if cfg.anchor_strategies.len() >= 2 {
            required.push(format!("agreement_{v}.json"));
        }
    }
    if !cfg.prune_strategies.is_empty() {
        required.push("prune_comparison.csv".into());
    }
    let missing: Vec<String> = required.into_iter().filter(|f| !dir.join(f).exists()).collect();
    if !missing.is_empty() {
        return Err(HarnessError::Missing(missing));
    }

    let out = dir.join("export");
    fs::create_dir_all(&out)?;
    let mut bundle = ExportBundle {
        dir: out.clone(),
        tables: Vec::new(),
        plots: Vec::new(),
        manifest: out.join("manifest.json"),
    };
    fs::copy(dir.join("manifest.json"), &bundle.manifest)?;
    let mut table = |name: &str, header: &[&str], rows: &Rows| -> Result<(), HarnessError> {
        let p = out.join(name);
        write(&p, header, rows)?;
        bundle.tables.push(p);
        Ok(())
    };

    // Latency.
    let (h, lat) = read(&dir.join("latency.csv"))?;
    let idx = ["variant", "strategy", "mean_ms", "std_ms", "median_ms"]
        .iter()
        .map(|c| column(&h, c))
        .collect::<Result<Vec<_>, _>>()?;
    let t3: Rows = lat.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect();
    table("latency.csv", &["variant", "strategy", "mean_ms", "std_ms", "median_ms"], &t3)?;

    // Agreement: overall, per risk, per category.
    let mut t4 = Rows::new();
    for v in &cfg.variants {
        let p = dir.join(format!("agreement_{v}.json"));
        if !p.exists() {
            continue;
        }
        let rep: AgreementReport = serde_json::from_slice(&fs::read(&p)?)?;
        let mut push = |section: &str, key: &str, r: &Rate| {
            t4.push(vec![
                v.to_string(),
                section.into(),
                key.into(),
                r.agree.to_string(),
                r.total.to_string(),
                format!("{:.2}", r.pct),
            ])
        };
        push("overall", "all", &rep.overall);
        for (k, r) in &rep.by_risk {
            push("by_risk", k, r);
        }
        for (k, r) in &rep.by_category {
            push("by_category", k, r);
        }
    }
    table("agreement.csv", &["variant", "section", "key", "agree", "total", "pct"], &t4)?;

    // Mean importance per (category, risk), ranked.
    let mut t5 = Rows::new();
    for v in &cfg.variants {
        for s in &cfg.anchor_strategies {
            let t = ImportanceTable::read_csv(&dir.join(format!("importance/{v}_{s}.csv")))?;
            for c in &t.cells {
                for (i, ty) in rank(&c.mean).into_iter().enumerate() {
                    t5.push(vec![
                        v.to_string(),
                        s.to_string(),
                        c.category.name().into(),
                        c.risk.name().into(),
                        (i + 1).to_string(),
                        ty.name().into(),
                        format!("{:.4}", c.mean[&ty]),
                        c.n.to_string(),
                    ]);
                }
            }
        }
    }
    table(
        "importance.csv",
        &["variant", "strategy", "category", "risk", "rank", "type", "mean_importance", "n"],
        &t5,
    )?;

    // Pruning comparison, one row per (model, graph).
    let prune = if cfg.prune_strategies.is_empty() {
        (
            ["model", "graph", "edges", "acc", "fp", "fn", "best_epoch", "train_seconds"]
                .map(String::from)
                .to_vec(),
            Rows::new(),
        )
    } else {
        read(&dir.join("prune_comparison.csv"))?
    };
    let header: Vec<&str> = prune.0.iter().map(String::as_str).collect();
    table("pruning.csv", &header, &prune.1)?;

    // Plot series.
    let mut plot = |name: &str, rows: Rows| -> Result<(), HarnessError> {
        let p = out.join(name);
        write(&p, &["x", "y", "series"], &rows)?;
        bundle.plots.push(p);
        Ok(())
    };
    plot(
        "plot_latency.csv",
        t3.iter().map(|r| vec![r[1].clone(), r[2].clone(), r[0].clone()]).collect(),
    )?;
    plot(
        "plot_agreement.csv",
        t4.iter()
            .map(|r| vec![r[2].clone(), r[5].clone(), format!("{}/{}", r[0], r[1])])
            .collect(),
    )?;
    plot(
        "plot_importance.csv",
        t5.iter()
            .map(|r| vec![r[5].clone(), r[6].clone(), format!("{}/{}/{}/{}", r[0], r[1], r[2], r[3])])
            .collect(),
    )?;
    let mut hist = Rows::new();
    for v in &cfg.variants {
        let (h, rows) = read(&dir.join(format!("history_{v}.csv")))?;
        let (e, a, l) = (column(&h, "epoch")?, column(&h, "val_acc")?, column(&h, "loss")?);
        for r in rows {
            hist.push(vec![r[e].clone(), r[a].clone(), format!("{v}/val_acc")]);
            hist.push(vec![r[e].clone(), r[l].clone(), format!("{v}/loss")]);
        }
    }
    plot("plot_history.csv", hist)?;
    let (h, rows) = prune;
    let cols: BTreeMap<&str, usize> = ["model", "graph", "acc"]
        .into_iter()
        .filter_map(|c| h.iter().position(|x| x == c).map(|i| (c, i)))
        .collect();
    let pr = if cols.len() == 3 {
        rows.iter()
            .map(|r| vec![r[cols["graph"]].clone(), r[cols["acc"]].clone(), r[cols["model"]].clone()])
            .collect()
    } else {
        Rows::new()
    };
    plot("plot_pruning.csv", pr)?;
    Ok(bundle)
}
