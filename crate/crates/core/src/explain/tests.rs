use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::graph::{build_graph, build_graph_with, fit_quantizers, HeteroGraph, NodeType, TypeSet};
use crate::models::{init_params, HeadAttention, HeadKind, ModelConfig, Variant};
use crate::ndiff::{backward_invocations, ParamStore};
use crate::synthgen::{generate_dataset, Category, GenConfig, Gazetteer, Risk};

fn graph(n: usize, seed: u64) -> HeteroGraph {
    let recs = generate_dataset(n.max(60), 2024, [0.25, 0.35, 0.40], seed).unwrap();
    let q = fit_quantizers(&recs, &GenConfig::default().bounds).unwrap();
    build_graph(&recs[..n], &q, &Gazetteer::default()).unwrap()
}

fn keep_only(types: &[NodeType]) -> HeteroGraph {
    let recs = generate_dataset(60, 2024, [0.25, 0.35, 0.40], 3).unwrap();
    let q = fit_quantizers(&recs, &GenConfig::default().bounds).unwrap();
    let keep: TypeSet = types.iter().copied().collect();
    build_graph_with(&recs[..4], &q, &Gazetteer::default(), |_| Ok(keep)).unwrap()
}

fn model(variant: Variant, seed: u64) -> (ModelConfig, ParamStore<f32>) {
    let cfg = ModelConfig::new(variant, 16);
    let p = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (cfg, p)
}

fn vector(id: u64, risk: Risk, scores: &[(NodeType, f64)]) -> ImportanceVector {
    ImportanceVector {
        sample_id: id,
        category: Category::Flood,
        risk,
        variant: Variant::Attention,
        strategy: "s".into(),
        method: Method::Attention,
        scores: scores.iter().copied().collect(),
    }
}

#[test]
fn singleton_groups_get_all_the_mass() {
    let raw = BTreeMap::from([(NodeType::Pm, 0.3), (NodeType::WeatherAlert, 0.01)]);
    let n = normalize_groups(&raw);
    assert_eq!(n[&NodeType::Pm], 100.0);
    assert_eq!(n[&NodeType::WeatherAlert], 100.0);
}

#[test]
fn uniform_sensors_split_evenly() {
    let raw: BTreeMap<NodeType, f64> = NodeType::SENSORS.iter().map(|&t| (t, 0.2)).collect();
    for v in normalize_groups(&raw).values() {
        assert_abs_diff_eq!(*v, 100.0 / 7.0, epsilon = 1e-9);
    }
}

#[test]
fn all_zero_group_is_split_evenly_and_structural_types_are_dropped() {
    let raw = BTreeMap::from([
        (NodeType::Drainage, 0.0),
        (NodeType::WeatherAlert, 0.0),
        (NodeType::Rainfall, 2.0),
        (NodeType::Pm, 0.0),
        (NodeType::Location, 5.0),
        (NodeType::ReportType, 1.0),
    ]);
    let n = normalize_groups(&raw);
    assert_eq!(n[&NodeType::Drainage], 50.0);
    assert_eq!(n[&NodeType::Rainfall], 100.0);
    assert_eq!(n[&NodeType::Pm], 0.0);
    assert!(!n.contains_key(&NodeType::Location));
    assert!(!n.contains_key(&NodeType::ReportType));
}

proptest! {
    #[test]
    fn groups_always_sum_to_100(xs in proptest::collection::vec(0.0f64..10.0, 12)) {
        let raw: BTreeMap<NodeType, f64> = NodeType::SENSORS
            .iter()
            .chain(NodeType::CONTEXT.iter())
            .copied()
            .zip(xs)
            .collect();
        let n = normalize_groups(&raw);
        let v = vector(0, Risk::Low, &n.into_iter().collect::<Vec<_>>());
        prop_assert!((v.group_sum(Group::Sensor) - 100.0).abs() < 1e-9);
        prop_assert!((v.group_sum(Group::Context) - 100.0).abs() < 1e-9);
    }
}

#[test]
fn attention_weights_are_read_per_slot() {
    let g = keep_only(&[NodeType::Rainfall, NodeType::Pm, NodeType::WeatherAlert, NodeType::Drainage]);
    let mut alpha = [0.0; 15];
    alpha[NodeType::Rainfall.slot().unwrap()] = 0.3;
    alpha[NodeType::Pm.slot().unwrap()] = 0.1;
    alpha[NodeType::WeatherAlert.slot().unwrap()] = 0.2;
    alpha[NodeType::Drainage.slot().unwrap()] = 0.2;
    alpha[NodeType::Location.slot().unwrap()] = 0.2;
    let record = vec![HeadAttention {
        internal: Vec::new(),
        head: HeadKind::Full,
        alpha: vec![alpha; g.n_reports()],
        empty: vec![false; g.n_reports()],
    }];
    let s = attention_importance(&record, &g, 0).unwrap();
    assert_abs_diff_eq!(s[&NodeType::Rainfall], 75.0, epsilon = 1e-9);
    assert_abs_diff_eq!(s[&NodeType::Pm], 25.0, epsilon = 1e-9);
    assert_abs_diff_eq!(s[&NodeType::WeatherAlert], 50.0, epsilon = 1e-9);
    assert_eq!(s.len(), 4);
}

#[test]
fn multihead_scores_average_only_the_heads_that_see_a_type() {
    let g = keep_only(&[NodeType::Rainfall, NodeType::Pm, NodeType::WeatherAlert, NodeType::Drainage]);
    let slot = |t: NodeType| t.slot().unwrap();
    let head = |kind, pairs: &[(NodeType, f64)]| {
        let mut a = [0.0; 15];
        for &(t, v) in pairs {
            a[slot(t)] = v;
        }
        HeadAttention {
            internal: Vec::new(),
            head: kind,
            alpha: vec![a; g.n_reports()],
            empty: vec![false; g.n_reports()],
        }
    };
    let record = vec![
        head(HeadKind::Sensor, &[(NodeType::Rainfall, 0.9), (NodeType::Pm, 0.1)]),
        head(HeadKind::Context, &[(NodeType::WeatherAlert, 0.5), (NodeType::Drainage, 0.5)]),
        head(
            HeadKind::Full,
            &[(NodeType::Rainfall, 0.1), (NodeType::Pm, 0.3), (NodeType::WeatherAlert, 0.6)],
        ),
    ];
    let s = attention_importance(&record, &g, 1).unwrap();
    // rainfall (0.9 + 0.1) / 2 = 0.5, pm (0.1 + 0.3) / 2 = 0.2
    assert_abs_diff_eq!(s[&NodeType::Rainfall], 100.0 * 0.5 / 0.7, epsilon = 1e-9);
    // alert (0.5 + 0.6) / 2 = 0.55, drainage 0.5 / 2 = 0.25
    assert_abs_diff_eq!(s[&NodeType::Drainage], 100.0 * 0.25 / 0.8, epsilon = 1e-9);
}

#[test]
fn inductive_models_have_no_attention_to_read() {
    let g = graph(8, 1);
    let (cfg, p) = model(Variant::Inductive, 0);
    let err = explain_reports(&p, &cfg, &g, &[0, 1], Method::Attention, "single_node").unwrap_err();
    assert!(matches!(err, ExplainError::NoAttention));
    assert_eq!(Method::for_variant(Variant::Inductive), Method::Gradient);
    assert_eq!(Method::for_variant(Variant::Multihead), Method::Attention);
}

#[test]
fn attention_explanation_never_runs_backward() {
    let g = graph(40, 2);
    for v in [Variant::Attention, Variant::Multihead] {
        let (cfg, p) = model(v, 1);
        let before = backward_invocations();
        let vs = explain_reports(&p, &cfg, &g, &(0..40).collect::<Vec<_>>(), Method::Attention, "x").unwrap();
        assert_eq!(backward_invocations(), before);
        assert_eq!(vs.len(), 40);
        for x in &vs {
            assert_abs_diff_eq!(x.group_sum(Group::Sensor), 100.0, epsilon = 1e-6);
            assert_abs_diff_eq!(x.group_sum(Group::Context), 100.0, epsilon = 1e-6);
            assert!(x.scores.keys().all(|t| t.is_eligible()));
        }
    }
}

#[test]
fn gradient_importance_covers_every_variant() {
    let g = graph(24, 4);
    for v in [Variant::Inductive, Variant::Attention, Variant::Multihead] {
        let (cfg, p) = model(v, 2);
        let before = backward_invocations();
        let vs = explain_reports(&p, &cfg, &g, &(0..24).collect::<Vec<_>>(), Method::Gradient, "x").unwrap();
        assert!(backward_invocations() > before);
        for x in &vs {
            assert_abs_diff_eq!(x.group_sum(Group::Sensor), 100.0, epsilon = 1e-6);
            assert!(x.scores.values().all(|s| s.is_finite() && *s >= 0.0));
        }
    }
}

#[test]
fn zero_classifier_gives_flat_gradient_importance() {
    // No path from any embedding to the logit: every raw score is 0.
    let g = graph(6, 5);
    let (cfg, mut p) = model(Variant::Inductive, 3);
    for v in p.get_mut("cls.2.w").unwrap().data_mut() {
        *v = 0.0;
    }
    let scores = gradient_importance(&p, &cfg, &g).unwrap();
    for s in &scores {
        for (t, v) in s {
            let n = if t.is_sensor() { 7.0 } else { 5.0 };
            assert_abs_diff_eq!(*v, 100.0 / n, epsilon = 1e-9);
        }
    }
}

#[test]
fn gradient_importance_ignores_a_positive_logit_scale() {
    // Raw scores are linear in the chosen logit, so normalization cancels a
    // positive rescaling of the output layer.
    let g = graph(10, 6);
    let (cfg, p) = model(Variant::Attention, 4);
    let mut q = p.clone();
    for name in ["cls.2.w", "cls.2.b"] {
        for v in q.get_mut(name).unwrap().data_mut() {
            *v *= 4.0;
        }
    }
    let a = gradient_importance(&p, &cfg, &g).unwrap();
    let b = gradient_importance(&q, &cfg, &g).unwrap();
    for (x, y) in a.iter().zip(&b) {
        for (t, v) in x {
            assert_abs_diff_eq!(*v, y[t], epsilon = 1e-3);
        }
    }
}

#[test]
fn rank_breaks_ties_by_name() {
    let s = BTreeMap::from([(NodeType::Wind, 10.0), (NodeType::Pm, 10.0), (NodeType::Rainfall, 50.0)]);
    assert_eq!(rank(&s), vec![NodeType::Rainfall, NodeType::Pm, NodeType::Wind]);
    assert_eq!(top_k(&s, 1), vec![NodeType::Rainfall]);
}

#[test]
fn aggregation_is_a_per_cell_mean() {
    let same = vector(1, Risk::High, &[(NodeType::Rainfall, 70.0), (NodeType::Pm, 30.0)]);
    let t = aggregate_importance(&[same.clone(), ImportanceVector { sample_id: 2, ..same.clone() }]);
    assert_eq!(t.cells.len(), 1);
    assert_eq!(t.cells[0].mean, same.scores);
    assert_eq!(t.cells[0].n, 2);

    let t = aggregate_importance(&[
        vector(1, Risk::Low, &[(NodeType::Rainfall, 100.0), (NodeType::Pm, 0.0)]),
        vector(2, Risk::Low, &[(NodeType::Rainfall, 0.0), (NodeType::Pm, 100.0)]),
        vector(3, Risk::Medium, &[(NodeType::Rainfall, 100.0)]),
        vector(4, Risk::Medium, &[(NodeType::Pm, 100.0)]),
    ]);
    let low = t.cell(Category::Flood, Risk::Low).unwrap();
    assert_eq!(low.mean[&NodeType::Rainfall], 50.0);
    assert_eq!(low.mean[&NodeType::Pm], 50.0);
    // Absent types count as zero.
    let med = t.cell(Category::Flood, Risk::Medium).unwrap();
    assert_eq!(med.mean[&NodeType::Pm], 50.0);
    assert!(t.cell(Category::Flood, Risk::High).is_none());
}

#[test]
fn tables_round_trip_through_json_and_write_csv() {
    let t = aggregate_importance(&[vector(1, Risk::Low, &[(NodeType::Rainfall, 60.0), (NodeType::Pm, 40.0)])]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    t.write_json(&path).unwrap();
    let back = ImportanceTable::read_json(&path).unwrap();
    assert_eq!(back, t);
    assert_eq!(back.hash(), t.hash());
    let csv = dir.path().join("t.csv");
    t.write_csv(&csv).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "category,risk,type,mean_importance,n");
    assert_eq!(lines[1], "flood_prevention,low,sensor_rainfall,60.0000,1");
}

fn top1_run(name: &str, tops: &[NodeType]) -> (String, Vec<ImportanceVector>) {
    let vs = tops
        .iter()
        .enumerate()
        .map(|(i, &t)| vector(i as u64, Risk::ALL[i % 3], &[(t, 90.0), (NodeType::Temperature, 10.0)]))
        .collect();
    (name.to_string(), vs)
}

#[test]
fn self_agreement_is_total() {
    let a = top1_run("a", &[NodeType::Pm, NodeType::Rainfall, NodeType::Wind]);
    let r = top1_agreement(&[a.clone(), ("a2".into(), a.1.clone())]).unwrap();
    assert_eq!(r.overall.pct, 100.0);
    assert_eq!(r.overall.total, 3);
}

#[test]
fn one_disagreement_in_four_is_75_percent() {
    use NodeType::*;
    let a = top1_run("a", &[Pm, Rainfall, Wind, Snowfall]);
    let b = top1_run("b", &[Pm, Rainfall, Wind, Humidity]);
    let c = top1_run("c", &[Pm, Rainfall, Wind, Snowfall]);
    let r = top1_agreement(&[a, b, c]).unwrap();
    assert_eq!((r.overall.agree, r.overall.total), (3, 4));
    assert_eq!(r.overall.pct, 75.0);
    // Sample 3 is low risk (index 3 % 3 == 0).
    assert_eq!(r.by_risk["low"].pct, 50.0);
    assert_eq!(r.by_risk["high"].pct, 100.0);
}

#[test]
fn agreement_needs_matching_samples() {
    use NodeType::*;
    let a = top1_run("a", &[Pm, Rainfall]);
    let b = top1_run("b", &[Pm, Rainfall, Wind]);
    assert!(matches!(
        top1_agreement(&[a.clone(), b]),
        Err(ExplainError::SampleMismatch { .. })
    ));
    assert!(matches!(top1_agreement(&[a]), Err(ExplainError::TooFewStrategies(1))));
}
