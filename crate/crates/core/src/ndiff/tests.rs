use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{check_gradients, primitive_checks};
use super::*;

fn t2(rows: &[&[f64]]) -> Tensor<f64> {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a.get2(i, p) * b.get2(p, j);
            }
        }
    }
    out
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t2(&[&[0.0, 0.0, 0.0]]));
    let y = tape.softmax(x, 1).unwrap();
    for &v in tape.value(y).data() {
        assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
    }
}

#[test]
fn layernorm_of_constant_row_leaves_only_bias() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t2(&[&[2.5, 2.5, 2.5, 2.5]]));
    let gain = tape.constant(t2(&[&[1.0, 2.0, 3.0, 4.0]]));
    let bias = tape.constant(t2(&[&[0.1, -0.2, 0.3, 0.0]]));
    let y = tape.layernorm(x, 1).unwrap();
    let y = tape.mul_row(y, gain).unwrap();
    let y = tape.add_row(y, bias).unwrap();
    assert_eq!(tape.value(y).data(), &[0.1, -0.2, 0.3, 0.0]);
}

#[test]
fn layernorm_rows_are_standardised() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t2(&[&[1.0, 4.0, -2.0, 7.0], &[0.5, 0.25, 3.0, -1.0]]));
    let y = tape.layernorm(x, 1).unwrap();
    for r in 0..2 {
        let row = tape.value(y).row(r);
        let mean = row.iter().sum::<f64>() / 4.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-12);
        assert_relative_eq!(var, 1.0, epsilon = 1e-4);
    }
}

#[test]
fn matmul_matches_naive_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::<f64>::new();
    store.init_normal("a", &[2, 3], 1.0, &mut rng);
    store.init_normal("b", &[3, 4], 1.0, &mut rng);
    let (a, b) = (store.get("a").unwrap().clone(), store.get("b").unwrap().clone());
    let mut tape = Tape::new();
    let (va, vb) = (tape.constant(a.clone()), tape.constant(b.clone()));
    let c = tape.matmul(va, vb).unwrap();
    assert_eq!(tape.value(c).shape(), &[2, 4]);
    for (x, y) in tape.value(c).data().iter().zip(naive_matmul(&a, &b)) {
        assert_relative_eq!(*x, y, epsilon = 1e-12);
    }
}

#[test]
fn shape_mismatch_names_both_shapes() {
    let mut tape = Tape::<f32>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
}

#[test]
fn relu_gradient_is_step_function() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t2(&[&[-1.0, 2.0]]), true);
    let y = tape.relu(x).unwrap();
    let s = tape.sum_all(y).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn five_parameter_mlp_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::<f64>::new();
    store.init_normal("w1", &[2, 2], 1.0, &mut rng);
    store.init_normal("w2", &[1, 1], 1.0, &mut rng);
    let x = t2(&[&[0.3, -1.2], &[0.8, 0.4], &[-0.5, 0.9]]);
    let inputs = [store.get("w1").unwrap().clone(), store.get("w2").unwrap().clone()];
    let report = check_gradients(&inputs, 1e-4, None, |t, v| {
        let xv = t.constant(x.clone());
        let h = t.matmul(xv, v[0])?;
        let h = t.relu(h)?;
        let s = t.sum_axis(h, 1)?;
        let s = t.sum_axis(s, 0)?;
        let y = t.mul(s, v[1])?;
        let y = t.mul(y, y)?;
        t.sum_all(y)
    })
    .unwrap();
    assert_eq!(report.checked, 5);
    assert!(report.max_rel_err <= 1e-4, "{report:?}");
}

#[test]
fn gradient_of_value_off_tape_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.leaf(t2(&[&[1.0]]), true);
    let y = tape.scale(x, 2.0).unwrap();
    let g = tape.backward(y).unwrap();

    let mut other = Tape::<f64>::new();
    let z = other.leaf(t2(&[&[1.0]]), true);
    assert!(matches!(g.get(z), Err(NdError::NotOnTape)));

    let c = tape.constant(t2(&[&[1.0]]));
    assert!(matches!(g.get(c), Err(NdError::NotOnTape)));
}

#[test]
fn backward_on_untraced_value_is_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(t2(&[&[1.0]]));
    let y = tape.scale(x, 2.0).unwrap();
    assert!(matches!(tape.backward(y), Err(NdError::Untraced)));
}

#[test]
fn cross_entropy_reference_values() {
    let mut tape = Tape::<f64>::new();
    let sure = tape.constant(t2(&[&[80.0, 0.0, 0.0]]));
    let l = tape.weighted_cross_entropy(sure, &[0], &[1.0, 1.0, 1.0]).unwrap();
    assert!(tape.value(l).item().abs() < 1e-12);

    let flat = tape.constant(t2(&[&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]]));
    let l = tape.weighted_cross_entropy(flat, &[0, 2], &[1.0, 1.0, 1.0]).unwrap();
    assert_relative_eq!(tape.value(l).item(), 3f64.ln(), epsilon = 1e-12);

    // Two samples, labels 0 and 1, class weights [2, 1, 1]:
    // p0 = softmax([1, 0, 0])[0] = e/(e+2); p1 = softmax([0, 2, 0])[1] = e²/(e²+2)
    // loss = (2·(−ln p0) + 1·(−ln p1)) / 3
    let e = std::f64::consts::E;
    let manual = (2.0 * -(e / (e + 2.0)).ln() + -(e * e / (e * e + 2.0)).ln()) / 3.0;
    let z = tape.constant(t2(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 0.0]]));
    let l = tape.weighted_cross_entropy(z, &[0, 1], &[2.0, 1.0, 1.0]).unwrap();
    assert_relative_eq!(tape.value(l).item(), manual, epsilon = 1e-12);
}

#[test]
fn cross_entropy_rejects_bad_label() {
    let mut tape = Tape::<f64>::new();
    let z = tape.constant(Tensor::zeros(&[1, 3]));
    assert!(matches!(
        tape.weighted_cross_entropy(z, &[3], &[1.0, 1.0, 1.0]),
        Err(NdError::Label { label: 3, .. })
    ));
}

fn scalar_store(v: f64) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    s.insert("p", Tensor::scalar(v));
    s
}

#[test]
fn adam_zero_gradient_keeps_parameters_and_decays_moments() {
    let mut params = scalar_store(0.5);
    let mut state = AdamState::new(&params, AdamConfig::default()).unwrap();
    state.step(&mut params, &scalar_store(0.0)).unwrap();
    assert_eq!(params.get("p").unwrap().item(), 0.5);
    assert_eq!(state.step, 1);

    state.step(&mut params, &scalar_store(2.0)).unwrap();
    let m = state.first_moment().get("p").unwrap().item();
    let v = state.second_moment().get("p").unwrap().item();
    state.step(&mut params, &scalar_store(0.0)).unwrap();
    assert_relative_eq!(state.first_moment().get("p").unwrap().item(), 0.9 * m, epsilon = 1e-15);
    assert_relative_eq!(state.second_moment().get("p").unwrap().item(), 0.999 * v, epsilon = 1e-15);
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut params = scalar_store(1.0);
    let mut state = AdamState::new(&params, AdamConfig::default()).unwrap();
    state.step(&mut params, &scalar_store(1.0)).unwrap();
    assert_relative_eq!(params.get("p").unwrap().item(), 1.0 - 1e-3, epsilon = 1e-10);
}

#[test]
fn adam_matches_reference_trajectory() {
    // Reference: textbook update on f(p) = (p - 3)², written without the library.
    let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
    let (mut p_ref, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    let mut reference = Vec::new();
    for t in 1..=10 {
        let g = 2.0 * (p_ref - 3.0);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        p_ref -= lr * mh / (vh.sqrt() + eps);
        reference.push(p_ref);
    }

    let mut params = scalar_store(0.0);
    let cfg = AdamConfig { lr, ..AdamConfig::default() };
    let mut state = AdamState::new(&params, cfg).unwrap();
    for want in reference {
        let p = params.get("p").unwrap().item();
        state.step(&mut params, &scalar_store(2.0 * (p - 3.0))).unwrap();
        assert_relative_eq!(params.get("p").unwrap().item(), want, epsilon = 1e-12);
    }
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut params = scalar_store(1.0);
    let mut state = AdamState::new(&params, AdamConfig::default()).unwrap();
    let err = state.step(&mut params, &scalar_store(f64::NAN)).unwrap_err();
    assert!(matches!(err, NdError::NonFiniteGradient(ref n) if n == "p"));
    assert_eq!(state.step, 0);
    assert_eq!(params.get("p").unwrap().item(), 1.0);
}

#[test]
fn inference_dropout_and_unit_scale_are_identities() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::new(&[2, 2], vec![1.0, -2.0, 3.5, 0.0]).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = tape.dropout(x, 0.3, false, &mut rng).unwrap();
    assert_eq!(y, x);
    let z = tape.scale(x, 1.0).unwrap();
    assert_eq!(tape.value(z), tape.value(x));
}

#[test]
fn training_dropout_is_seed_deterministic() {
    let run = |seed| {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::full(&[8, 8], 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = tape.dropout(x, 0.3, true, &mut rng).unwrap();
        tape.value(y).clone()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
    let kept = run(5).data().iter().filter(|&&v| v > 0.0).count();
    assert!(run(5).data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-6));
    assert!((20..=64).contains(&kept));
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f32>::new();
    store.init_linear("a.w", 3, 4, &mut rng);
    store.init_const("a.b", &[1, 4], 0.25);
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &store, "cfg", serde_json::json!({"epochs": 3})).unwrap();
    let (back, manifest) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(back, store);
    assert_eq!(manifest.tensors.len(), 2);
    assert_eq!(encode_params(&back), encode_params(&store));
}

#[test]
fn every_primitive_passes_finite_differences_on_a_fixed_seed() {
    for (name, r) in primitive_checks(0).unwrap() {
        assert!(r.max_rel_err <= 1e-4, "{name}: {r:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn primitives_pass_finite_differences(seed in any::<u64>()) {
        for (name, r) in primitive_checks(seed).unwrap() {
            prop_assert!(r.max_rel_err <= 1e-4, "{}: {:?}", name, r);
        }
    }

    #[test]
    fn masked_softmax_rows_normalise(
        vals in proptest::collection::vec(-30.0f32..30.0, 12),
        mask in proptest::collection::vec(any::<bool>(), 12),
    ) {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new(&[3, 4], vals).unwrap());
        let y = tape.masked_fill(x, &mask, f32::NEG_INFINITY).unwrap();
        let y = tape.softmax(y, 1).unwrap();
        let out = tape.value(y);
        for r in 0..3 {
            let row = out.row(r);
            let live = (0..4).filter(|&j| !mask[r * 4 + j]).count();
            for j in 0..4 {
                prop_assert!(row[j] >= 0.0);
                if mask[r * 4 + j] {
                    prop_assert_eq!(row[j], 0.0);
                }
            }
            let s: f32 = row.iter().sum();
            if live > 0 {
                prop_assert!((s - 1.0).abs() <= 1e-6);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }
    }
}

proptest! {
    #[test]
    fn gemm_matches_triple_loop_for_every_layout(
        m in 1usize..12,
        k in 1usize..12,
        n in 1usize..12,
        ta in any::<bool>(),
        tb in any::<bool>(),
        beta in prop::sample::select(vec![0.0, 1.0, 0.5]),
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c0: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Stored transposed when the flag is set.
        let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
        let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
        let at = |i: usize, p: usize| a[(i as isize * rsa + p as isize * csa) as usize];
        let bt = |p: usize, j: usize| b[(p as isize * rsb + j as isize * csb) as usize];
        let mut c = c0.clone();
        f64::gemm(m, k, n, &a, rsa, csa, &b, rsb, csb, beta, &mut c);
        let mut c32: Vec<f32> = c0.iter().map(|&x| x as f32).collect();
        let a32: Vec<f32> = a.iter().map(|&x| x as f32).collect();
        let b32: Vec<f32> = b.iter().map(|&x| x as f32).collect();
        f32::gemm(m, k, n, &a32, rsa, csa, &b32, rsb, csb, beta as f32, &mut c32);
        for i in 0..m {
            for j in 0..n {
                let want = beta * c0[i * n + j] + (0..k).map(|p| at(i, p) * bt(p, j)).sum::<f64>();
                prop_assert!((c[i * n + j] - want).abs() < 1e-12);
                prop_assert!((c32[i * n + j] as f64 - want).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn kink_inside_the_stencil_is_refined_away() {
    // relu(x) with x just right of zero: the h = 1e-6 stencil crosses the kink.
    let x = Tensor::new(&[1], vec![3e-7]).unwrap();
    let r = check_gradients(&[x], 1e-6, None, |t, v| {
        let y = t.relu(v[0])?;
        t.sum_all(y)
    })
    .unwrap();
    assert_eq!(r.refined, 1);
    assert!(r.max_rel_err < 1e-6, "{r:?}");
}

#[test]
fn wrong_gradient_survives_refinement() {
    // x * stop_gradient(x): the tape sees d/dx = x, the truth is 2x.
    let x = Tensor::new(&[2], vec![0.7, -1.3]).unwrap();
    let r = check_gradients(&[x], 1e-6, None, |t, v| {
        let c = t.constant(t.value(v[0]).clone());
        let y = t.mul(v[0], c)?;
        t.sum_all(y)
    })
    .unwrap();
    assert_eq!(r.refined, 2);
    assert!(r.max_rel_err > 0.4, "{r:?}");
}
