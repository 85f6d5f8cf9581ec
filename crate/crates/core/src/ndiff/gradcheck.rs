//! Central finite-difference verification of tape gradients (64-bit).

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::NdError;

/// Error floor on the denominator so that near-zero gradients are compared
/// absolutely rather than relatively.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// (input index, flat element index) of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
    /// Coordinates re-measured with a smaller step because the first
    /// estimate straddled a kink (ReLU at zero and the like).
    pub refined: usize,
}

/// Error above which a coordinate is re-measured with smaller steps.
pub const REFINE_ABOVE: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR)
}

/// Compare tape gradients of the scalar built by `f` with central differences.
///
/// A coordinate whose error exceeds [`REFINE_ABOVE`] is re-measured at
/// `h / 10` and `h / 100` and keeps the smallest error: a kink inside the
/// stencil shrinks away, a wrong gradient does not.
///
/// `f` receives fresh leaf vars (one per input, all trainable) and must return
/// a scalar var. `coords`, when given, limits the check to those
/// `(input, element)` pairs.
pub fn check_gradients<F>(
    inputs: &[Tensor<f64>],
    h: f64,
    coords: Option<&[(usize, usize)]>,
    f: F,
) -> Result<GradCheck, NdError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, NdError>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64, NdError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).cloned())
        .collect::<Result<_, _>>()?;

    let all: Vec<(usize, usize)>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = inputs
                .iter()
                .enumerate()
                .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
                .collect();
            &all
        }
    };

    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: 0,
        refined: 0,
    };
    let mut xs = inputs.to_vec();
    let central = |xs: &mut [Tensor<f64>], i: usize, j: usize, h: f64| -> Result<f64, NdError> {
        let orig = xs[i].data()[j];
        xs[i].data_mut()[j] = orig + h;
        let plus = eval(xs)?;
        xs[i].data_mut()[j] = orig - h;
        let minus = eval(xs)?;
        xs[i].data_mut()[j] = orig;
        Ok(rel_err(analytic[i].data()[j], (plus - minus) / (2.0 * h)))
    };
    for &(i, j) in coords {
        let mut e = central(&mut xs, i, j, h)?;
        if e > REFINE_ABOVE {
            report.refined += 1;
            for step in [h / 10.0, h / 100.0] {
                e = e.min(central(&mut xs, i, j, step)?);
            }
        }
        report.checked += 1;
        if e > report.max_rel_err || e.is_nan() {
            report.max_rel_err = if e.is_nan() { f64::INFINITY } else { e };
            report.worst = (i, j);
        }
    }
    Ok(report)
}

fn random(shape: &[usize], rng: &mut impl rand::Rng, away_from_zero: bool) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(-1.0..1.0);
            if away_from_zero && v.abs() < 0.05 {
                v.signum() * 0.05 + v
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("sized")
}

/// Reduce an op output to a scalar through a fixed random projection so every
/// output element carries a distinct upstream gradient.
fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var, NdError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let shape = tape.value(out).shape().to_vec();
    let w = tape.constant(random(&shape, &mut rng, false));
    let prod = tape.mul(out, w)?;
    tape.sum_all(prod)
}

/// Finite-difference check of every tape primitive on shapes drawn from `seed`.
pub fn primitive_checks(seed: u64) -> Result<Vec<(&'static str, GradCheck)>, NdError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..5usize);
    let k = rng.random_range(1..5usize);
    let n = rng.random_range(2..5usize);
    let h = 1e-6;
    let mut out = Vec::new();

    let a = random(&[m, k], &mut rng, false);
    let b = random(&[k, n], &mut rng, false);
    out.push(("matmul", check_gradients(&[a, b], h, None, |t, v| {
        let y = t.matmul(v[0], v[1])?;
        project(t, y, seed)
    })?));

    let x = random(&[m, n], &mut rng, false);
    let y = random(&[m, n], &mut rng, false);
    out.push(("add", check_gradients(&[x.clone(), y.clone()], h, None, |t, v| {
        let z = t.add(v[0], v[1])?;
        project(t, z, seed)
    })?));
    out.push(("mul", check_gradients(&[x.clone(), y.clone()], h, None, |t, v| {
        let z = t.mul(v[0], v[1])?;
        project(t, z, seed)
    })?));

    let row = random(&[1, n], &mut rng, false);
    out.push(("add_row", check_gradients(&[x.clone(), row.clone()], h, None, |t, v| {
        let z = t.add_row(v[0], v[1])?;
        project(t, z, seed)
    })?));
    out.push(("mul_row", check_gradients(&[x.clone(), row], h, None, |t, v| {
        let z = t.mul_row(v[0], v[1])?;
        project(t, z, seed)
    })?));
    let col = random(&[m, 1], &mut rng, false);
    out.push(("scale_rows", check_gradients(&[x.clone(), col], h, None, |t, v| {
        let z = t.scale_rows(v[0], v[1])?;
        project(t, z, seed)
    })?));
    out.push(("scale", check_gradients(&[x.clone()], h, None, |t, v| {
        let z = t.scale(v[0], 0.37)?;
        project(t, z, seed)
    })?));

    let xr = random(&[m, n], &mut rng, true);
    out.push(("relu", check_gradients(&[xr], h, None, |t, v| {
        let z = t.relu(v[0])?;
        project(t, z, seed)
    })?));

    let axis = rng.random_range(0..2usize);
    out.push(("softmax", check_gradients(&[x.clone()], h, None, |t, v| {
        let z = t.softmax(v[0], axis)?;
        project(t, z, seed)
    })?));
    let x3 = random(&[2, m, n], &mut rng, false);
    let axis3 = rng.random_range(0..3usize);
    out.push(("softmax_3d", check_gradients(&[x3.clone()], h, None, |t, v| {
        let z = t.softmax(v[0], axis3)?;
        project(t, z, seed)
    })?));
    let xl = random(&[m, n + 1], &mut rng, false);
    out.push(("layernorm", check_gradients(&[xl], h, None, |t, v| {
        let z = t.layernorm(v[0], 1)?;
        project(t, z, seed)
    })?));
    out.push(("layernorm_3d", check_gradients(&[x3.clone()], h, None, |t, v| {
        let z = t.layernorm(v[0], axis3)?;
        project(t, z, seed)
    })?));
    out.push(("dropout", check_gradients(&[x.clone()], h, None, |t, v| {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = t.dropout(v[0], 0.3, true, &mut r)?;
        project(t, z, seed)
    })?));
    let mask: Vec<bool> = (0..m * n).map(|i| i % 3 == 1).collect();
    out.push(("masked_fill", check_gradients(&[x.clone()], h, None, |t, v| {
        let z = t.masked_fill(v[0], &mask, -4.0)?;
        project(t, z, seed)
    })?));
    out.push(("masked_softmax", check_gradients(&[x.clone()], h, None, |t, v| {
        let mut mask = vec![false; m * n];
        for r in 0..m {
            mask[r * n] = true;
        }
        let z = t.masked_fill(v[0], &mask, f64::NEG_INFINITY)?;
        let z = t.softmax(z, 1)?;
        project(t, z, seed)
    })?));
    let x2 = random(&[m, k], &mut rng, false);
    out.push(("concat_cols", check_gradients(&[x.clone(), x2.clone()], h, None, |t, v| {
        let z = t.concat(&[v[0], v[1]], 1)?;
        project(t, z, seed)
    })?));
    let x4 = random(&[k, n], &mut rng, false);
    out.push(("concat_rows", check_gradients(&[x.clone(), x4], h, None, |t, v| {
        let z = t.concat(&[v[0], v[1]], 0)?;
        project(t, z, seed)
    })?));
    out.push(("narrow", check_gradients(&[x.clone()], h, None, |t, v| {
        let z = t.narrow(v[0], 1, 1, n - 1)?;
        project(t, z, seed)
    })?));
    let idx: Vec<Option<u32>> = (0..m + 2)
        .map(|i| if i == 1 { None } else { Some((i % m) as u32) })
        .collect();
    out.push(("gather_rows", check_gradients(&[x.clone()], h, None, |t, v| {
        let z = t.gather_rows(v[0], &idx)?;
        project(t, z, seed)
    })?));
    let src: Vec<u32> = (0..2 * m).map(|i| (i % m) as u32).collect();
    let dst: Vec<u32> = (0..2 * m).map(|i| ((i * 7) % (m + 1)) as u32).collect();
    out.push(("scatter_mean", check_gradients(&[x.clone()], h, None, |t, v| {
        let z = t.scatter_mean(v[0], &src, &dst, m + 1)?;
        project(t, z, seed)
    })?));
    out.push(("sum_axis", check_gradients(&[x3], h, None, |t, v| {
        let z = t.sum_axis(v[0], axis3)?;
        project(t, z, seed)
    })?));
    out.push(("reshape_transpose", check_gradients(&[x.clone()], h, None, |t, v| {
        let z = t.reshape(v[0], &[n, m])?;
        let z = t.transpose(z)?;
        project(t, z, seed)
    })?));
    let labels: Vec<usize> = (0..m).map(|i| (i * 5 + seed as usize) % n).collect();
    let weights: Vec<f64> = (0..n).map(|i| 0.5 + i as f64).collect();
    out.push(("weighted_cross_entropy", check_gradients(&[x], h, None, |t, v| {
        t.weighted_cross_entropy(v[0], &labels, &weights)
    })?));
    Ok(out)
}
