use proptest::prelude::*;

use super::*;
use crate::anchors::AnchorStrategy;
use crate::models::{TrainProfile, Variant};
use crate::prune::Strategy;

const LOW: usize = 0;
const MED: usize = 1;
const HIGH: usize = 2;

fn repeat(pairs: &[(usize, usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let (mut p, mut t) = (Vec::new(), Vec::new());
    for &(truth, pred, n) in pairs {
        t.extend(std::iter::repeat_n(truth, n));
        p.extend(std::iter::repeat_n(pred, n));
    }
    (p, t)
}

#[test]
fn perfect_predictions() {
    let labels = vec![0, 1, 2, 2, 1, 0, 2];
    let m = compute_metrics(&labels, &labels).unwrap();
    assert_eq!(m.accuracy, 100.0);
    assert_eq!(m.fp_high, Some(0.0));
    assert_eq!(m.fn_high, Some(0.0));
}

#[test]
fn hand_built_confusion_matrix() {
    // 40 high: 36 caught, 4 called medium. 9 others called high.
    // precision(high) = 36/45 = 0.8, recall(high) = 36/40 = 0.9.
    let (p, t) = repeat(&[
        (HIGH, HIGH, 36),
        (HIGH, MED, 4),
        (MED, HIGH, 5),
        (MED, MED, 25),
        (LOW, HIGH, 4),
        (LOW, LOW, 26),
    ]);
    let m = compute_metrics(&p, &t).unwrap();
    assert!((m.fp_high.unwrap() - 20.0).abs() < 1e-12);
    assert!((m.fn_high.unwrap() - 10.0).abs() < 1e-12);
    assert_eq!(m.support, [30, 30, 40]);
    assert!((m.accuracy - 87.0).abs() < 1e-12);
}

#[test]
fn majority_predictor_and_undefined_classes() {
    let (_, t) = repeat(&[(LOW, LOW, 25), (MED, MED, 35), (HIGH, HIGH, 40)]);
    let p = vec![HIGH; t.len()];
    let m = compute_metrics(&p, &t).unwrap();
    assert!((m.accuracy - 40.0).abs() < 1e-12);
    assert_eq!(m.precision[LOW], None);
    assert_eq!(m.precision[MED], None);
    assert_eq!(m.recall[LOW], Some(0.0));

    let m = compute_metrics(&[LOW, MED], &[LOW, MED]).unwrap();
    assert_eq!(m.recall[HIGH], None);
    assert_eq!(m.fn_high, None);
    assert_eq!(m.fp_high, None);
}

#[test]
fn misaligned_or_empty_inputs_are_rejected() {
    assert!(matches!(
        compute_metrics(&[0, 1], &[0]),
        Err(HarnessError::LengthMismatch { predictions: 2, labels: 1 })
    ));
    assert!(matches!(compute_metrics(&[], &[]), Err(HarnessError::Empty)));
}

proptest! {
    #[test]
    fn metric_identities(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..200)) {
        let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = compute_metrics(&p, &t).unwrap();
        let trace: usize = (0..3).map(|c| m.confusion[c][c]).sum();
        prop_assert!((m.accuracy - 100.0 * trace as f64 / t.len() as f64).abs() < 1e-12);
        for c in 0..3 {
            prop_assert_eq!(m.confusion[c].iter().sum::<usize>(), t.iter().filter(|&&x| x == c).count());
        }
        if let (Some(fp), Some(prec)) = (m.fp_high, m.precision[HIGH]) {
            prop_assert!((fp + prec - 100.0).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&fp));
        }
        if let (Some(fnr), Some(rec)) = (m.fn_high, m.recall[HIGH]) {
            prop_assert!((fnr + rec - 100.0).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&fnr));
        }
    }
}

#[test]
fn latency_summary_statistics() {
    let s = LatencyStats::from_samples("median", &[4.0, 1.0, 3.0, 2.0]).unwrap();
    assert_eq!(s.mean_ms, 2.5);
    assert_eq!(s.median_ms, 2.5);
    assert!((s.std_ms - 1.25f64.sqrt()).abs() < 1e-12);
    assert!(matches!(LatencyStats::from_samples("x", &[]), Err(HarnessError::Empty)));
}

#[test]
fn config_round_trips_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::paper(dir.path().join("out"));
    assert_eq!(cfg.dataset.n, 50_040);
    assert_eq!(cfg.variants.len(), 3);
    assert_eq!(cfg.prune_strategies.len(), 2);
    let path = dir.path().join("c.json");
    cfg.save(&path).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), cfg);

    // Optional fields fall back to their defaults.
    let minimal = serde_json::json!({
        "dataset": { "n": 100, "year": 2024, "risk_dist": [0.25, 0.35, 0.4], "seed": 1 },
        "variants": ["attention"],
        "profile": "desk",
        "anchor_strategies": ["median"],
        "output_dir": "x",
    });
    let c: ExperimentConfig = serde_json::from_value(minimal).unwrap();
    assert_eq!(c.schema_version, SCHEMA_VERSION);
    assert_eq!(c.samples_per_cell, 100);
    assert_eq!(c.latency_warmup, 10);
    c.validate().unwrap();

    let mut bad = c.clone();
    bad.schema_version = 99;
    assert!(bad.validate().is_err());
    let mut bad = c.clone();
    bad.anchor_strategies = vec![AnchorStrategy::Median, AnchorStrategy::Median];
    assert!(bad.validate().is_err());
    let mut bad = c;
    bad.prune_strategies = vec![Strategy::TopOnly, Strategy::TopOnly];
    assert!(bad.validate().is_err());
}

fn tiny(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(dir);
    cfg.dataset.n = 1500;
    cfg.variants = vec![Variant::Attention];
    cfg.profile = TrainProfile::Desk;
    cfg.epochs = Some(1);
    cfg.samples_per_cell = 2;
    cfg.latency_warmup = 2;
    cfg
}

#[test]
fn reruns_reproduce_the_manifest_and_export_works() {
    let root = tempfile::tempdir().unwrap();
    let a = run_experiment(&tiny(&root.path().join("a"))).unwrap();
    let b = run_experiment(&tiny(&root.path().join("b"))).unwrap();
    assert_eq!(a.manifest.without_timing(), b.manifest.without_timing());
    assert_eq!(Manifest::load(&a.dir).unwrap(), a.manifest);
    assert!(a.manifest.artifacts.contains_key("prune_comparison.csv"));
    assert!(a.manifest.timing.contains_key("train"));
    for s in &a.manifest.stages {
        for o in &s.outputs {
            assert!(a.dir.join(o).exists(), "{o}");
        }
    }
    let m = &a.metrics[&Variant::Attention];
    assert_eq!(m.latency.len(), 4);
    assert_eq!(a.agreement[&Variant::Attention].strategies.len(), 4);

    let bundle = export_report(&a.dir).unwrap();
    assert_eq!(bundle.tables.len(), 4);
    assert!(bundle.manifest.exists());
    let agreement = std::fs::read_to_string(bundle.dir.join("agreement.csv")).unwrap();
    for section in ["overall", "by_risk", "by_category"] {
        assert!(agreement.contains(section));
    }
    let pruning = std::fs::read_to_string(bundle.dir.join("pruning.csv")).unwrap();
    assert_eq!(pruning.lines().count(), 1 + 2);
    for p in &bundle.plots {
        assert!(std::fs::read_to_string(p).unwrap().starts_with("x,y,series"));
    }

    std::fs::remove_file(a.dir.join("latency.csv")).unwrap();
    match export_report(&a.dir) {
        Err(HarnessError::Missing(m)) => assert_eq!(m, vec!["latency.csv".to_string()]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn failing_stage_is_named_and_partial_outputs_kept() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = tiny(root.path());
    // Too few records for every (category, risk) stratum to split.
    cfg.dataset.n = 40;
    match run_experiment(&cfg) {
        Err(HarnessError::Stage { stage, .. }) => assert_eq!(stage, "split"),
        other => panic!("{:?}", other.map(|s| s.dir)),
    }
    let m = Manifest::load(root.path()).unwrap();
    assert_eq!(m.failed_stage.as_deref(), Some("split"));
    assert!(root.path().join("dataset.ndjson").exists());
    assert!(m.artifacts.contains_key("audit.json"));
}

#[test]
fn shipped_configs_match_the_built_in_ones() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for (file, built) in [
        ("desk.json", ExperimentConfig::desk("runs/desk")),
        ("full.json", ExperimentConfig::paper("runs/full")),
    ] {
        assert_eq!(ExperimentConfig::load(&root.join(file)).unwrap(), built, "{file}");
    }
}
