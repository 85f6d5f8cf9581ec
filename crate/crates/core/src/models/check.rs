//! Finite-difference check of a whole model variant on a tiny graph (f64).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forward::forward;
use super::params::{init_params, ModelConfig, Variant};
use super::ModelError;
use crate::graph::HeteroGraph;
use crate::ndiff::gradcheck::{check_gradients, GradCheck};
use crate::ndiff::{Bound, ParamStore, Tensor};

/// Check `coords_per_tensor` random coordinates of every parameter tensor of
/// `variant` (hidden width `hidden`) against central differences of the
/// weighted cross-entropy over all reports of `g`.
pub fn check_model_gradients(
    variant: Variant,
    hidden: usize,
    g: &HeteroGraph,
    seed: u64,
    coords_per_tensor: usize,
) -> Result<GradCheck, ModelError> {
    let mut cfg = ModelConfig::new(variant, hidden);
    cfg.attn_heads = 2;
    cfg.type_embedding = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: ParamStore<f64> = init_params(&cfg, &mut rng)?;
    let names: Vec<String> = params.names().cloned().collect();
    // Non-trivial layernorm affines and biases so every path carries signal.
    let inputs: Vec<Tensor<f64>> = params
        .iter()
        .map(|(name, t)| {
            let mut t = t.clone();
            if name.ends_with(".b") || name.ends_with(".g") || name.ends_with("bias") {
                for v in t.data_mut() {
                    *v += rand::Rng::random_range(&mut rng, -0.5..0.5);
                }
            }
            t
        })
        .collect();
    let mut coords = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        let k = coords_per_tensor.min(t.len());
        coords.extend(sample(&mut rng, t.len(), k).into_iter().map(|j| (i, j)));
    }
    let labels: Vec<usize> = g.reports.iter().map(|r| r.risk.index()).collect();
    let weights = [1.0, 1.5, 0.75];
    Ok(check_gradients(&inputs, 1e-6, Some(&coords), |tape, vars| {
        let p = Bound::from_vars(&names, vars);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let out = forward(tape, &p, &cfg, g, false, &mut r).map_err(|e| match e {
            ModelError::Nd(e) => e,
            other => crate::ndiff::NdError::Invalid(other.to_string()),
        })?;
        tape.weighted_cross_entropy(out.logits, &labels, &weights)
    })?)
}
