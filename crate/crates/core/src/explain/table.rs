use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::importance::ImportanceVector;
use super::ExplainError;
use crate::graph::NodeType;
use crate::synthgen::{Category, Risk};
use crate::util::json_hash;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub category: Category,
    pub risk: Risk,
    pub n: usize,
    pub mean: BTreeMap<NodeType, f64>,
}

impl Cell {
    pub fn top(&self, k: usize) -> Vec<NodeType> {
        top_k(&self.mean, k)
    }
}

/// Mean importance per (category, risk) cell. Cells without samples are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub cells: Vec<Cell>,
}

/// Types by descending score; equal scores in type-name order.
pub fn rank(scores: &BTreeMap<NodeType, f64>) -> Vec<NodeType> {
    let mut v: Vec<(NodeType, f64)> = scores.iter().map(|(t, s)| (*t, *s)).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.name().cmp(b.0.name())));
    v.into_iter().map(|(t, _)| t).collect()
}

pub fn top_k(scores: &BTreeMap<NodeType, f64>, k: usize) -> Vec<NodeType> {
    rank(scores).into_iter().take(k).collect()
}

/// Arithmetic mean per cell. A type missing from some vectors counts as 0 there.
pub fn aggregate_importance(vectors: &[ImportanceVector]) -> ImportanceTable {
    let mut groups: BTreeMap<(Category, Risk), Vec<&ImportanceVector>> = BTreeMap::new();
    for v in vectors {
        groups.entry((v.category, v.risk)).or_default().push(v);
    }
    let cells = groups
        .into_iter()
        .map(|((category, risk), vs)| {
            let mut mean: BTreeMap<NodeType, f64> = BTreeMap::new();
            for v in &vs {
                for (t, s) in &v.scores {
                    *mean.entry(*t).or_default() += s;
                }
            }
            for s in mean.values_mut() {
                *s /= vs.len() as f64;
            }
            Cell {
                category,
                risk,
                n: vs.len(),
                mean,
            }
        })
        .collect();
    ImportanceTable { cells }
}

impl ImportanceTable {
    pub fn cell(&self, category: Category, risk: Risk) -> Option<&Cell> {
        self.cells.iter().find(|c| c.category == category && c.risk == risk)
    }

    pub fn hash(&self) -> String {
        json_hash(self)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ExplainError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self, ExplainError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    /// Inverse of [`ImportanceTable::write_csv`]. Cells keep first-seen order.
    pub fn read_csv(path: &Path) -> Result<Self, ExplainError> {
        let mut r = csv::Reader::from_path(path)?;
        let mut cells: Vec<Cell> = Vec::new();
        for (line, row) in r.records().enumerate() {
            let row = row?;
            let bad = |what: &str| ExplainError::Parse(format!("row {}: bad {what}", line + 2));
            let field = |i: usize| row.get(i).ok_or_else(|| bad("column count"));
            let category = Category::parse(field(0)?).ok_or_else(|| bad("category"))?;
            let risk = Risk::parse(field(1)?).ok_or_else(|| bad("risk"))?;
            let t = NodeType::parse(field(2)?).ok_or_else(|| bad("type"))?;
            let mean: f64 = field(3)?.parse().map_err(|_| bad("mean_importance"))?;
            let n: usize = field(4)?.parse().map_err(|_| bad("n"))?;
            let pos = match cells.iter().position(|c| c.category == category && c.risk == risk) {
                Some(p) => p,
                None => {
                    cells.push(Cell {
                        category,
                        risk,
                        n,
                        mean: BTreeMap::new(),
                    });
                    cells.len() - 1
                }
            };
            cells[pos].mean.insert(t, mean);
        }
        Ok(ImportanceTable { cells })
    }

    /// Rows `category, risk, type, mean_importance, n`.
    pub fn write_csv(&self, path: &Path) -> Result<(), ExplainError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["category", "risk", "type", "mean_importance", "n"])?;
        for c in &self.cells {
            for t in rank(&c.mean) {
                w.write_record([
                    c.category.name(),
                    c.risk.name(),
                    t.name(),
                    &format!("{:.4}", c.mean[&t]),
                    &c.n.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
