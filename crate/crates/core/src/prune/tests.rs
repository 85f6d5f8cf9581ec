use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use super::*;
use crate::explain::ImportanceTable;
use crate::graph::{build_graph, fit_quantizers, HeteroGraph, NodeType, Quantizers, Relation, TypeSet};
use crate::models::{ModelConfig, TrainConfig, Variant};
use crate::synthgen::{generate_dataset, split_dataset, Category, GenConfig, Gazetteer, ReportRecord, Risk};

fn reference_table() -> ImportanceTable {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", "reference_top3.csv"].iter().collect();
    ImportanceTable::read_csv(&path).unwrap()
}

fn dataset(n: usize, seed: u64) -> (Vec<ReportRecord>, Quantizers) {
    let recs = generate_dataset(n, 2024, [0.25, 0.35, 0.40], seed).unwrap();
    let q = fit_quantizers(&recs, &GenConfig::default().bounds).unwrap();
    (recs, q)
}

/// Independent top-3 scan: sort each cell by (score desc, name asc).
fn brute_top3(table: &ImportanceTable, c: Category, r: Risk) -> BTreeSet<&'static str> {
    let cell = table.cells.iter().find(|x| x.category == c && x.risk == r).unwrap();
    let mut v: Vec<(&'static str, f64)> = cell.mean.iter().map(|(t, s)| (t.name(), *s)).collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
    v.into_iter().take(3).map(|(n, _)| n).collect()
}

fn names(s: TypeSet) -> BTreeSet<&'static str> {
    s.iter().map(NodeType::name).collect()
}

fn scoped(scope: PruneScope) -> BTreeSet<&'static str> {
    NodeType::NEIGHBORS
        .iter()
        .filter(|t| match scope {
            PruneScope::AllEligible => !matches!(t, NodeType::Location | NodeType::ReportCount | NodeType::ReportType),
            PruneScope::SensorsAndDrainage => t.name().starts_with("sensor_") || t.name() == "drainage",
        })
        .map(|t| t.name())
        .collect()
}

#[test]
fn reference_table_has_every_cell() {
    let t = reference_table();
    assert_eq!(t.cells.len(), 33);
    assert!(t.cells.iter().all(|c| c.mean.len() == 3 && c.n == 100));
}

#[test]
fn bottom_excluded_matches_a_brute_force_scan() {
    let t = reference_table();
    for scope in [PruneScope::SensorsAndDrainage, PruneScope::AllEligible] {
        let spec = derive_bottom_excluded(&t, scope).unwrap();
        assert_eq!(spec.by_category.len(), 11);
        for &c in Category::ALL {
            let union: BTreeSet<&str> = Risk::ALL.iter().flat_map(|&r| brute_top3(&t, c, r)).collect();
            let expect_removed: BTreeSet<&str> = scoped(scope).difference(&union).copied().collect();
            assert_eq!(names(spec.removed(c, Risk::Low).unwrap()), expect_removed, "{c} {scope:?}");
        }
    }
}

#[test]
fn top_only_matches_a_brute_force_scan() {
    let t = reference_table();
    for scope in [PruneScope::SensorsAndDrainage, PruneScope::AllEligible] {
        let spec = derive_top_only(&t, scope).unwrap();
        for &c in Category::ALL {
            for &r in Risk::ALL {
                let top = brute_top3(&t, c, r);
                let expect_removed: BTreeSet<&str> = scoped(scope).difference(&top).copied().collect();
                assert_eq!(names(spec.removed(c, r).unwrap()), expect_removed, "{c} {r} {scope:?}");
            }
        }
    }
}

#[test]
fn fine_dust_drops_the_unranked_sensors() {
    let spec = derive_bottom_excluded(&reference_table(), PruneScope::AllEligible).unwrap();
    let removed = spec.removed(Category::FineDust, Risk::High).unwrap();
    for t in [NodeType::Rainfall, NodeType::Temperature, NodeType::ApparentTemp, NodeType::Snowfall] {
        assert!(removed.contains(t));
    }
    for t in [NodeType::Pm, NodeType::Humidity, NodeType::Wind] {
        assert!(!removed.contains(t));
    }
}

#[test]
fn drainage_high_keeps_its_three_ranked_types() {
    let spec = derive_top_only(&reference_table(), PruneScope::AllEligible).unwrap();
    let kept: TypeSet = spec
        .retained(Category::Drainage, Risk::High)
        .unwrap()
        .iter()
        .filter(|t| t.is_eligible())
        .collect();
    assert_eq!(
        kept,
        [NodeType::Rainfall, NodeType::WeatherAlert, NodeType::PreAlertTime].into_iter().collect()
    );
}

#[test]
fn top_only_is_within_bottom_excluded() {
    let t = reference_table();
    for scope in [PruneScope::SensorsAndDrainage, PruneScope::AllEligible] {
        let be = derive_bottom_excluded(&t, scope).unwrap();
        let to = derive_top_only(&t, scope).unwrap();
        for &c in Category::ALL {
            for &r in Risk::ALL {
                assert!(to.retained(c, r).unwrap().is_subset(be.retained(c, r).unwrap()));
            }
        }
    }
}

#[test]
fn structural_types_survive_every_spec() {
    let t = reference_table();
    for strategy in [Strategy::BottomExcluded, Strategy::TopOnly] {
        for scope in [PruneScope::SensorsAndDrainage, PruneScope::AllEligible] {
            let spec = derive(&t, strategy, scope).unwrap();
            for &c in Category::ALL {
                for &r in Risk::ALL {
                    let kept = spec.retained(c, r).unwrap();
                    for s in NodeType::STRUCTURAL {
                        assert!(kept.contains(s));
                    }
                }
            }
        }
    }
}

#[test]
fn derivation_is_deterministic_and_round_trips() {
    let t = reference_table();
    let a = derive_top_only(&t, PruneScope::default()).unwrap();
    let b = derive_top_only(&t.clone(), PruneScope::default()).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_eq!(a.source_table_hash, t.hash());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("spec.json");
    a.write_json(&p).unwrap();
    assert_eq!(PruneSpec::read_json(&p).unwrap(), a);
}

#[test]
fn missing_cell_is_named() {
    let mut t = reference_table();
    t.cells.retain(|c| !(c.category == Category::HeatWave && c.risk == Risk::Medium));
    match derive_bottom_excluded(&t, PruneScope::default()) {
        Err(PruneError::MissingCell(c, r)) => assert_eq!((c, r), (Category::HeatWave, Risk::Medium)),
        other => panic!("{other:?}"),
    }
    assert!(derive_top_only(&t, PruneScope::default()).is_err());
}

#[test]
fn categories_outside_the_spec_are_rejected() {
    let (recs, q) = dataset(200, 1);
    let spec = PruneSpec::identity(&[Category::Flood]);
    assert!(matches!(
        prune_graph(&recs, &q, &Gazetteer::default(), &spec),
        Err(PruneError::MissingCategory(_))
    ));
}

#[test]
fn identity_spec_reproduces_the_original_graph() {
    let (recs, q) = dataset(300, 2);
    let gaz = Gazetteer::default();
    let (g, report) = apply_prune(&recs, &q, &gaz, &PruneSpec::identity(Category::ALL)).unwrap();
    assert_eq!(g.content_hash(), build_graph(&recs, &q, &gaz).unwrap().content_hash());
    assert_eq!(report.edges_before, report.edges_after);
    assert_eq!(report.reduction_pct, 0.0);
}

/// Neighbor feature rows of every report, keyed by type.
fn stars(g: &HeteroGraph) -> Vec<BTreeMap<NodeType, Vec<f32>>> {
    (0..g.n_reports())
        .map(|i| {
            NodeType::NEIGHBORS
                .iter()
                .filter_map(|&t| {
                    g.slots[i][t.slot().unwrap()].map(|n| (t, g.features[t.index()].row(n as usize).to_vec()))
                })
                .collect()
        })
        .collect()
}

#[test]
fn pruned_graphs_are_subgraphs_with_the_predicted_reduction() {
    let (recs, q) = dataset(3000, 3);
    let gaz = Gazetteer::default();
    let original = build_graph(&recs, &q, &gaz).unwrap();
    let full = stars(&original);
    let t = reference_table();
    let mut reductions = Vec::new();
    for strategy in [Strategy::BottomExcluded, Strategy::TopOnly] {
        let spec = derive(&t, strategy, PruneScope::default()).unwrap();
        let (g, report) = apply_prune(&recs, &q, &gaz, &spec).unwrap();
        g.check_invariants().unwrap();
        for (i, star) in stars(&g).iter().enumerate() {
            for (t, row) in star {
                assert_eq!(full[i].get(t), Some(row), "report {i} gained or changed {t}");
            }
            for s in NodeType::STRUCTURAL {
                assert!(star.contains_key(&s));
            }
        }
        // Oracle: two directed edges per removed (report, type) link.
        let removed: usize = recs
            .iter()
            .map(|r| spec.removed(r.category, r.risk).unwrap().len() * 2)
            .sum();
        assert_eq!(report.edges_before - report.edges_after, removed);
        assert_eq!(
            report.relations[&Relation::AdjacentTo.name()].before,
            report.relations[&Relation::AdjacentTo.name()].after
        );
        reductions.push(report.reduction_pct);
    }
    assert!(reductions[1] > reductions[0], "{reductions:?}");
}

#[test]
fn identity_retrain_reproduces_the_original_row() {
    let (recs, q) = dataset(400, 4);
    let split = split_dataset(&recs, [0.8, 0.1, 0.1], 0.5, 4).unwrap();
    let gaz = Gazetteer::default();
    let data = Dataset {
        records: &recs,
        split: &split,
        quantizers: &q,
        gazetteer: &gaz,
    };
    let cfg = CycleConfig {
        model: ModelConfig::new(Variant::Inductive, 16),
        train: TrainConfig {
            epochs: 2,
            batch_size: 64,
            lr: 1e-3,
            patience: 5,
            seed: 9,
        },
        scope: PruneScope::default(),
        samples_per_cell: 3,
        sample_seed: 0,
    };
    let report = retrain_with_spec(&data, PruneSpec::identity(Category::ALL), &cfg).unwrap();
    assert_eq!(report.original.acc, report.pruned.acc);
    assert_eq!(report.original.fp, report.pruned.fp);
    assert_eq!(report.original.fn_, report.pruned.fn_);
    assert_eq!(report.original.edges, report.pruned.edges);

    let cycle = prune_retrain_cycle(&data, Strategy::BottomExcluded, &cfg).unwrap();
    assert!(cycle.pruned.edges < cycle.original.edges);
    assert!(cycle.table.as_ref().is_some_and(|t| t.cells.len() == 33));
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cmp.csv");
    cycle.write_csv(&p).unwrap();
    let text = std::fs::read_to_string(p).unwrap();
    assert!(text.starts_with("model,graph,edges,acc,fp,fn,train_seconds\ninductive,original,"));
}
