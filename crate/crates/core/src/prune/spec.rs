use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PruneError;
use crate::explain::{top_k, ImportanceTable};
use crate::graph::{NodeType, TypeSet};
use crate::synthgen::{Category, Risk};
use crate::util::json_hash;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Drop types outside the top-3 of every risk level of a category.
    BottomExcluded,
    /// Keep only each (category, risk) cell's top-3.
    TopOnly,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::BottomExcluded => "bottom_excluded",
            Strategy::TopOnly => "top_only",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = PruneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "bottom_excluded" => Ok(Strategy::BottomExcluded),
            "top_only" => Ok(Strategy::TopOnly),
            _ => Err(PruneError::Parse(format!("unknown strategy {s:?}"))),
        }
    }
}

/// Which ranked types a spec may remove. Ranking always covers every
/// eligible type; the scope only limits what removal can touch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneScope {
    /// Sensors and drainage. Alert and pre-alert nodes always stay.
    #[default]
    SensorsAndDrainage,
    AllEligible,
}

impl PruneScope {
    pub fn prunable(self, t: NodeType) -> bool {
        match self {
            PruneScope::SensorsAndDrainage => t.is_sensor() || t == NodeType::Drainage,
            PruneScope::AllEligible => t.is_eligible(),
        }
    }

    pub fn types(self) -> TypeSet {
        NodeType::NEIGHBORS.into_iter().filter(|&t| self.prunable(t)).collect()
    }
}

impl FromStr for PruneScope {
    type Err = PruneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "sensors_and_drainage" => Ok(PruneScope::SensorsAndDrainage),
            "all_eligible" => Ok(PruneScope::AllEligible),
            _ => Err(PruneError::Parse(format!("unknown prune scope {s:?}"))),
        }
    }
}

/// Neighbor types each report keeps, by category (bottom-excluded) or by
/// (category, risk) cell (top-only). Retained sets always include the
/// structural types and every type outside the scope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneSpec {
    pub strategy: Strategy,
    pub scope: PruneScope,
    pub source_table_hash: String,
    pub structural: TypeSet,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_category: BTreeMap<Category, TypeSet>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub by_cell: BTreeMap<Category, BTreeMap<Risk, TypeSet>>,
}

fn structural() -> TypeSet {
    NodeType::STRUCTURAL.into_iter().collect()
}

/// The three top-3 sets of a category, low to high.
fn category_tops(table: &ImportanceTable, c: Category) -> Result<[TypeSet; 3], PruneError> {
    let mut out = [TypeSet::EMPTY; 3];
    for (i, &r) in Risk::ALL.iter().enumerate() {
        let cell = table.cell(c, r).ok_or(PruneError::MissingCell(c, r))?;
        let eligible = cell
            .mean
            .iter()
            .filter(|(t, _)| t.is_eligible())
            .map(|(t, v)| (*t, *v))
            .collect();
        out[i] = top_k(&eligible, 3).into_iter().collect();
    }
    Ok(out)
}

fn table_categories(table: &ImportanceTable) -> Vec<Category> {
    let mut cats: Vec<Category> = table.cells.iter().map(|c| c.category).collect();
    cats.sort();
    cats.dedup();
    cats
}

/// Keep `ranked` plus everything the scope cannot remove.
fn retain(scope: PruneScope, ranked: TypeSet) -> TypeSet {
    TypeSet::all_neighbors()
        .difference(scope.types())
        .union(ranked)
        .union(structural())
}

/// Remove, per category, the scoped types that miss the top-3 at every risk level.
pub fn derive_bottom_excluded(table: &ImportanceTable, scope: PruneScope) -> Result<PruneSpec, PruneError> {
    let mut by_category = BTreeMap::new();
    for c in table_categories(table) {
        let [a, b, d] = category_tops(table, c)?;
        by_category.insert(c, retain(scope, a.union(b).union(d)));
    }
    Ok(PruneSpec {
        strategy: Strategy::BottomExcluded,
        scope,
        source_table_hash: table.hash(),
        structural: structural(),
        by_category,
        by_cell: BTreeMap::new(),
    })
}

/// Keep, per (category, risk), that cell's top-3 among the scoped types.
pub fn derive_top_only(table: &ImportanceTable, scope: PruneScope) -> Result<PruneSpec, PruneError> {
    let mut by_cell: BTreeMap<Category, BTreeMap<Risk, TypeSet>> = BTreeMap::new();
    for c in table_categories(table) {
        let tops = category_tops(table, c)?;
        for (&r, top) in Risk::ALL.iter().zip(tops) {
            by_cell.entry(c).or_default().insert(r, retain(scope, top));
        }
    }
    Ok(PruneSpec {
        strategy: Strategy::TopOnly,
        scope,
        source_table_hash: table.hash(),
        structural: structural(),
        by_category: BTreeMap::new(),
        by_cell,
    })
}

pub fn derive(table: &ImportanceTable, strategy: Strategy, scope: PruneScope) -> Result<PruneSpec, PruneError> {
    match strategy {
        Strategy::BottomExcluded => derive_bottom_excluded(table, scope),
        Strategy::TopOnly => derive_top_only(table, scope),
    }
}

impl PruneSpec {
    /// A bottom-excluded spec that keeps every type for the given categories.
    pub fn identity(categories: &[Category]) -> PruneSpec {
        PruneSpec {
            strategy: Strategy::BottomExcluded,
            scope: PruneScope::AllEligible,
            source_table_hash: String::new(),
            structural: structural(),
            by_category: categories.iter().map(|&c| (c, TypeSet::all_neighbors())).collect(),
            by_cell: BTreeMap::new(),
        }
    }

    /// Neighbor types a report of this category and risk keeps. Top-only
    /// specs read the risk, which is the ground-truth label.
    pub fn retained(&self, c: Category, r: Risk) -> Result<TypeSet, PruneError> {
        let set = match self.strategy {
            Strategy::BottomExcluded => self.by_category.get(&c).copied(),
            Strategy::TopOnly => self.by_cell.get(&c).and_then(|m| m.get(&r)).copied(),
        };
        set.map(|s| s.union(self.structural))
            .ok_or(PruneError::MissingCategory(c))
    }

    pub fn removed(&self, c: Category, r: Risk) -> Result<TypeSet, PruneError> {
        Ok(TypeSet::all_neighbors().difference(self.retained(c, r)?))
    }

    pub fn categories(&self) -> Vec<Category> {
        match self.strategy {
            Strategy::BottomExcluded => self.by_category.keys().copied().collect(),
            Strategy::TopOnly => self.by_cell.keys().copied().collect(),
        }
    }

    /// Caveat that has to travel with anything built from a top-only spec.
    pub fn leakage_note(&self) -> Option<&'static str> {
        (self.strategy == Strategy::TopOnly).then_some(
            "top-only pruning selects each report's neighbor set by its ground-truth risk, \
             on every split including test",
        )
    }

    pub fn hash(&self) -> String {
        json_hash(self)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), PruneError> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<PruneSpec, PruneError> {
        let spec: PruneSpec = serde_json::from_slice(&std::fs::read(path)?)?;
        let allowed = TypeSet::all_neighbors();
        let sets = spec.by_category.values().chain(spec.by_cell.values().flat_map(|m| m.values()));
        for s in sets {
            if !s.is_subset(allowed) {
                return Err(PruneError::Parse("retained set names a non-neighbor type".into()));
            }
        }
        Ok(spec)
    }
}
