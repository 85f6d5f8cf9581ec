use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::domain::{Category, ReportRecord, Risk};
use super::SynthError;

/// Record indices per split; `labeled[i]` refers to `train[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub labeled: Vec<bool>,
}

impl Split {
    pub fn labeled_train(&self) -> impl Iterator<Item = usize> + '_ {
        self.train
            .iter()
            .zip(&self.labeled)
            .filter(|(_, &l)| l)
            .map(|(&i, _)| i)
    }

    /// Labeled flag per record index for a dataset of `n` records.
    pub fn labeled_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for i in self.labeled_train() {
            mask[i] = true;
        }
        mask
    }
}

/// Stratified split by (category, risk). Per stratum, train and validation
/// sizes are rounded and test takes the remainder; the labeled mask takes
/// `round(labeled_ratio × train)` of each stratum's train records.
pub fn split_dataset(
    records: &[ReportRecord],
    ratios: [f64; 3],
    labeled_ratio: f64,
    seed: u64,
) -> Result<Split, SynthError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
        return Err(SynthError::Config(format!("split ratios {ratios:?} must sum to 1")));
    }
    if !(labeled_ratio > 0.0 && labeled_ratio <= 1.0) {
        return Err(SynthError::Config(format!("labeled ratio {labeled_ratio} outside (0, 1]")));
    }
    let mut strata: BTreeMap<(Category, Risk), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        strata.entry((r.category, r.risk)).or_default().push(i);
    }
    if let Some(((c, r), v)) = strata.iter().find(|(_, v)| v.len() < 3) {
        return Err(SynthError::SmallStratum {
            category: *c,
            risk: *r,
            size: v.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut labeled = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for members in strata.values_mut() {
        members.shuffle(&mut rng);
        let n = members.len() as f64;
        let n_train = (ratios[0] * n).round() as usize;
        let n_val = ((ratios[1] * n).round() as usize).min(members.len() - n_train);
        let n_lab = (labeled_ratio * n_train as f64).round() as usize;
        for (j, &i) in members[..n_train].iter().enumerate() {
            train.push(i);
            labeled.push(j < n_lab);
        }
        val.extend_from_slice(&members[n_train..n_train + n_val]);
        test.extend_from_slice(&members[n_train + n_val..]);
    }
    Ok(Split {
        train,
        val,
        test,
        labeled,
    })
}
