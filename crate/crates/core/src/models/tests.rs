use std::collections::BTreeMap;

use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forward::forward;
use super::train::train_step;
use super::*;
use crate::graph::{
    build_graph, build_graph_with, fit_quantizers, EdgeList, HeteroGraph, NodeType, Quantizers, Relation, TypeSet,
};
use crate::ndiff::{AdamConfig, AdamState, Bound, ParamStore, Tape, Tensor};
use crate::synthgen::{generate_dataset, Category, GenConfig, Gazetteer, ReportRecord};

fn fixture(n: usize, seed: u64) -> (Vec<ReportRecord>, Quantizers) {
    let recs = generate_dataset(n.max(60), 2024, [0.25, 0.35, 0.40], seed).unwrap();
    let q = fit_quantizers(&recs, &GenConfig::default().bounds).unwrap();
    (recs.into_iter().take(n).collect(), q)
}

fn graph(n: usize, seed: u64) -> HeteroGraph {
    let (recs, q) = fixture(n, seed);
    build_graph(&recs, &q, &Gazetteer::default()).unwrap()
}

fn keep_only(types: &[NodeType]) -> HeteroGraph {
    let (recs, q) = fixture(1, 11);
    let keep: TypeSet = types.iter().copied().collect();
    build_graph_with(&recs, &q, &Gazetteer::default(), |_| Ok(keep)).unwrap()
}

/// Rebuild `g` without the relations touching the given neighbor types.
fn drop_relations(g: &HeteroGraph, types: &[NodeType]) -> HeteroGraph {
    let edges: BTreeMap<Relation, EdgeList> = g
        .edges
        .iter()
        .map(|(r, e)| {
            let gone = matches!(r, Relation::Has(t) | Relation::Of(t) if types.contains(t));
            (*r, if gone { EdgeList::default() } else { e.clone() })
        })
        .collect();
    HeteroGraph::from_parts(g.features.clone(), edges, g.reports.clone(), g.location_regions.clone()).unwrap()
}

fn params(cfg: &ModelConfig, seed: u64) -> ParamStore<f32> {
    init_params(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn small(variant: Variant) -> ModelConfig {
    let mut c = ModelConfig::new(variant, 16);
    c.attn_heads = 4;
    c
}

fn h_report(p: &ParamStore<f64>, cfg: &ModelConfig, g: &HeteroGraph) -> Tensor<f64> {
    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, p, false);
    let out = forward(&mut tape, &b, cfg, g, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    tape.value(out.h_report).clone()
}

#[test]
fn parameter_counts_match_the_reported_sizes() {
    for (v, target) in [(Variant::Inductive, 180e3), (Variant::Attention, 350e3), (Variant::Multihead, 520e3)] {
        let n = params(&ModelConfig::new(v, 128), 0).count() as f64;
        assert!((n - target).abs() <= 0.15 * target, "{v}: {n} parameters vs ~{target}");
    }
}

#[test]
fn zero_inputs_leave_the_layernorm_bias_pattern() {
    let cfg = small(Variant::Inductive);
    let mut p: ParamStore<f64> = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let names: Vec<String> = p.names().cloned().collect();
    for n in &names {
        for v in p.get_mut(n).unwrap().data_mut() {
            *v = 0.0;
        }
    }
    let b1: Vec<f64> = (0..16).map(|i| 0.1 * i as f64).collect();
    let b2: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.3 } else { -0.2 }).collect();
    p.insert("l1.ln.b", Tensor::new(&[1, 16], b1.clone()).unwrap());
    p.insert("l2.ln.b", Tensor::new(&[1, 16], b2.clone()).unwrap());
    let mut g = graph(1, 2);
    for f in &mut g.features {
        for v in f.data_mut() {
            *v = 0.0;
        }
    }
    let h = h_report(&p, &cfg, &g);
    for i in 0..16 {
        assert_abs_diff_eq!(h.data()[i], b1[i].max(0.0) + b2[i].max(0.0), epsilon = 1e-12);
    }
}

#[test]
fn duplicated_neighbor_leaves_mean_unchanged() {
    let cfg = small(Variant::Inductive);
    let p: ParamStore<f64> = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let g = graph(1, 4);
    let before = h_report(&p, &cfg, &g);

    let mut features = g.features.clone();
    let t = NodeType::Rainfall;
    let row = features[t.index()].row(0).to_vec();
    let mut data = features[t.index()].data().to_vec();
    data.extend(row);
    features[t.index()] = Tensor::new(&[2, t.dim()], data).unwrap();
    let mut edges = g.edges.clone();
    edges.get_mut(&Relation::Has(t)).unwrap().push(0, 1);
    edges.get_mut(&Relation::Of(t)).unwrap().push(1, 0);
    let dup = HeteroGraph::from_parts(features, edges, g.reports.clone(), g.location_regions.clone()).unwrap();
    let after = h_report(&p, &cfg, &dup);
    for (a, b) in before.data().iter().zip(after.data()) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
    }
}

/// Pencil-and-paper oracle for the first layer at a report with one rainfall
/// neighbor and one location neighbor (no other edges).
#[test]
fn first_layer_matches_a_hand_computation() {
    let (recs, q) = fixture(1, 5);
    let keep: TypeSet = [NodeType::Rainfall].into_iter().collect();
    let full = build_graph_with(&recs, &q, &Gazetteer::default(), |_| Ok(keep)).unwrap();
    let g = drop_relations(&full, &[NodeType::ReportCount, NodeType::ReportType]);
    let mut edges = g.edges.clone();
    edges.insert(Relation::AdjacentTo, EdgeList::default());
    let g = HeteroGraph::from_parts(g.features.clone(), edges, g.reports.clone(), g.location_regions.clone()).unwrap();
    let d = 4;
    let mut cfg = ModelConfig::new(Variant::Inductive, d);
    cfg.attn_heads = 2;
    cfg.bases = 2;
    let p: ParamStore<f64> = init_params(&cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();

    let mut tape = Tape::new();
    let b = Bound::bind(&mut tape, &p, false);
    let out = forward(&mut tape, &b, &cfg, &g, false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let got = tape.value(out.h1[NodeType::Report.index()].unwrap()).row(0).to_vec();

    let m = |name: &str| p.get(name).unwrap().clone();
    let vecmat = |x: &[f64], w: &Tensor<f64>| -> Vec<f64> {
        (0..w.cols()).map(|j| (0..x.len()).map(|i| x[i] * w.get2(i, j)).sum()).collect()
    };
    let proj = |t: NodeType, row: usize| -> Vec<f64> {
        let x: Vec<f64> = g.features[t.index()].row(row).iter().map(|&v| v as f64).collect();
        let w = m(&format!("in.{}.w", t.name()));
        let bias = m(&format!("in.{}.b", t.name()));
        vecmat(&x, &w).iter().zip(bias.data()).map(|(a, b)| a + b).collect()
    };
    let rel_w = |r: Relation| -> Tensor<f64> {
        let coef = m("l1.coef");
        let bases = m("l1.bases");
        let mut w = Tensor::zeros(&[d, d]);
        for k in 0..cfg.bases {
            for e in 0..d * d {
                w.data_mut()[e] += coef.get2(r.index(), k) * bases.get2(k, e);
            }
        }
        w
    };
    let x_r = proj(NodeType::Report, 0);
    let x_rain = proj(NodeType::Rainfall, 0);
    let loc_row = g.slots[0][NodeType::Location.slot().unwrap()].unwrap() as usize;
    let x_loc = proj(NodeType::Location, loc_row);
    let mut z = vecmat(&x_r, &m("l1.self"));
    for (x, t) in [(&x_rain, NodeType::Rainfall), (&x_loc, NodeType::Location)] {
        let add = vecmat(x, &rel_w(Relation::Of(t)));
        z.iter_mut().zip(add).for_each(|(a, b)| *a += b);
    }
    z.iter_mut().zip(m("l1.bias").data()).for_each(|(a, b)| *a += b);
    let mean = z.iter().sum::<f64>() / d as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
    let (gain, beta) = (m("l1.ln.g"), m("l1.ln.b"));
    let want: Vec<f64> = (0..d)
        .map(|i| ((z[i] - mean) / (var + 1e-5).sqrt() * gain.data()[i] + beta.data()[i]).max(0.0))
        .collect();
    for (a, b) in got.iter().zip(&want) {
        assert_abs_diff_eq!(*a, *b, epsilon = 1e-9);
    }
}

fn sensor_alpha(g: &HeteroGraph, p: &ParamStore<f32>, cfg: &ModelConfig) -> HeadAttention {
    let pred = predict(p, cfg, g).unwrap();
    pred.attention.into_iter().find(|a| a.head == HeadKind::Sensor).unwrap()
}

#[test]
fn single_allowed_neighbor_takes_all_the_weight() {
    let cfg = small(Variant::Multihead);
    let g = keep_only(&[NodeType::Pm]);
    let a = sensor_alpha(&g, &params(&cfg, 7), &cfg);
    assert_abs_diff_eq!(a.alpha[0][NodeType::Pm.slot().unwrap()], 1.0, epsilon = 1e-6);
    assert_eq!(a.alpha[0].iter().filter(|&&x| x != 0.0).count(), 1);
}

#[test]
fn identical_keys_give_uniform_weights() {
    let cfg = small(Variant::Multihead);
    let mut p = params(&cfg, 8);
    for name in ["head.sensor.k.w", "head.sensor.k.b"] {
        for v in p.get_mut(name).unwrap().data_mut() {
            *v = 0.0;
        }
    }
    let a = sensor_alpha(&graph(3, 9), &p, &cfg);
    for row in &a.alpha {
        for t in NodeType::SENSORS {
            assert_abs_diff_eq!(row[t.slot().unwrap()], 1.0 / 7.0, epsilon = 1e-6);
        }
    }
}

#[test]
fn disallowed_neighbor_gets_exactly_zero() {
    let cfg = small(Variant::Multihead);
    let g = keep_only(&[NodeType::Pm, NodeType::Humidity, NodeType::WeatherAlert]);
    let a = sensor_alpha(&g, &params(&cfg, 10), &cfg);
    let row = a.alpha[0];
    assert_eq!(row[NodeType::WeatherAlert.slot().unwrap()], 0.0);
    let pair = row[NodeType::Pm.slot().unwrap()] + row[NodeType::Humidity.slot().unwrap()];
    assert_abs_diff_eq!(pair, 1.0, epsilon = 1e-6);
}

#[test]
fn inductive_has_no_attention_and_sensor_only_star_flags_context() {
    let g = graph(4, 12);
    let cfg = small(Variant::Inductive);
    assert!(predict(&params(&cfg, 1), &cfg, &g).unwrap().attention.is_empty());

    let cfg = small(Variant::Multihead);
    let mut drop: Vec<NodeType> = NodeType::CONTEXT.to_vec();
    drop.extend(NodeType::STRUCTURAL);
    let sensors_only = drop_relations(&graph(1, 13), &drop);
    let pred = predict(&params(&cfg, 2), &cfg, &sensors_only).unwrap();
    let ctx = pred.attention.iter().find(|a| a.head == HeadKind::Context).unwrap();
    assert!(ctx.empty[0]);
    assert!(ctx.alpha[0].iter().all(|&x| x == 0.0));
    assert!(pred.logits[0].iter().all(|x| x.is_finite()));
}

#[test]
fn attention_rows_sum_to_one_over_allowed_types() {
    for seed in 0..10 {
        let cfg = small(Variant::Multihead);
        let g = graph(5, 20 + seed);
        let pred = predict(&params(&cfg, seed), &cfg, &g).unwrap();
        for head in &pred.attention {
            let allowed = head.head.allowed();
            for (r, row) in head.alpha.iter().enumerate() {
                let present = g.neighbor_types(r);
                let mut sum = 0.0;
                for t in NodeType::NEIGHBORS {
                    let a = row[t.slot().unwrap()];
                    if allowed.contains(t) && present.contains(t) {
                        sum += a;
                    } else {
                        assert_eq!(a, 0.0);
                    }
                }
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-5);
            }
        }
    }
}

#[test]
fn changing_report_type_changes_attention() {
    let cfg = small(Variant::Attention);
    let p = params(&cfg, 3);
    let g = graph(8, 14);
    let base = predict(&p, &cfg, &g).unwrap();
    let mut h = g.clone();
    for v in h.features[NodeType::ReportType.index()].data_mut() {
        *v = ((*v as usize + 1) % Category::ALL.len()) as f32;
    }
    let moved = predict(&p, &cfg, &h).unwrap();
    assert_ne!(base.attention[0].alpha, moved.attention[0].alpha);
}

#[test]
fn predictions_do_not_depend_on_batch_company() {
    let g = graph(60, 15);
    for v in Variant::ALL {
        let cfg = small(v);
        let p = params(&cfg, 4);
        let alone = predict(&p, &cfg, &g.closed_batch(&[7])).unwrap();
        let crowd = predict(&p, &cfg, &g.closed_batch(&[3, 7, 50, 12])).unwrap();
        // Skinny and blocked matrix products round differently.
        for (a, b) in alone.logits[0].iter().zip(&crowd.logits[1]) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "{v}: {a} vs {b}");
        }
        let again = predict(&p, &cfg, &g.closed_batch(&[7])).unwrap();
        assert_eq!(alone, again);
    }
}

#[test]
fn sensor_query_weights_receive_gradient() {
    let cfg = small(Variant::Multihead);
    let mut g = graph(1, 16);
    g.labeled = vec![true];
    let mut p = params(&cfg, 5);
    let before = p.get("head.sensor.q.w").unwrap().clone();
    let mut adam = AdamState::new(&p, AdamConfig::default()).unwrap();
    train_step(&mut p, &mut adam, &cfg, &g, &[1.0; 3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let grad = adam.first_moment().get("head.sensor.q.w").unwrap();
    assert!(grad.data().iter().any(|&x| x != 0.0));
    assert_ne!(&before, p.get("head.sensor.q.w").unwrap());
}

#[test]
fn unlabeled_batch_leaves_parameters_alone() {
    let cfg = small(Variant::Inductive);
    let g = graph(6, 17);
    let mut p = params(&cfg, 6);
    let before = p.clone();
    let mut adam = AdamState::new(&p, AdamConfig::default()).unwrap();
    let r = train_step(&mut p, &mut adam, &cfg, &g, &[1.0; 3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(r.is_none());
    assert_eq!(p, before);
    assert_eq!(adam.step, 0);
}

#[test]
fn early_stopping_waits_out_the_patience() {
    let mut s = EarlyStopping::new(20);
    let mut stopped = None;
    for epoch in 1..=100 {
        s.observe(epoch, 1.0 - epoch as f64 * 0.001);
        if s.should_stop() {
            stopped = Some(epoch);
            break;
        }
    }
    assert_eq!(stopped, Some(21));
    assert_eq!(s.best_epoch, 1);
}

#[test]
fn class_weights_balance_counts() {
    let w = class_weights(&[0, 1, 1, 2, 2, 2]);
    assert_abs_diff_eq!(w[0], 2.0);
    assert_abs_diff_eq!(w[1], 1.0);
    assert_abs_diff_eq!(w[2], 6.0 / 9.0);
}

#[test]
fn training_rejects_empty_inputs() {
    let g = graph(20, 18);
    let (mc, tc) = TrainProfile::Desk.configs(Variant::Inductive, 0);
    assert!(matches!(train(&mc, &tc, &g, &[0, 1], &[2]), Err(ModelError::NoLabeled)));
    let mut g = g;
    g.labeled[0] = true;
    assert!(matches!(train(&mc, &tc, &g, &[0, 1], &[]), Err(ModelError::EmptyVal)));
}

#[test]
fn short_training_beats_majority() {
    let (recs, q) = fixture(1500, 19);
    let split = crate::synthgen::split_dataset(&recs, [0.8, 0.1, 0.1], 0.5, 19).unwrap();
    let mut g = build_graph(&recs, &q, &Gazetteer::default()).unwrap();
    g.labeled = split.labeled_mask(recs.len());
    let (mut mc, mut tc) = TrainProfile::Desk.configs(Variant::Inductive, 1);
    mc.hidden = 32;
    tc.epochs = 5;
    let out = train(&mc, &tc, &g, &split.train, &split.val).unwrap();
    assert!(out.history.len() <= 5);
    let ev = evaluate(&out.params, &mc, &g, &split.test).unwrap();
    assert!(ev.accuracy > 0.45, "accuracy {}", ev.accuracy);
}

#[test]
fn every_variant_passes_finite_differences() {
    let g = graph(3, 21);
    for v in Variant::ALL {
        for seed in 0..3 {
            let r = check_model_gradients(v, 8, &g, seed, 3).unwrap();
            assert!(r.max_rel_err <= 1e-4, "{v} seed {seed}: {r:?}");
        }
    }
}
