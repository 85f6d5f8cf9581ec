use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::synthgen::{Category, Risk};

/// Up to `per_cell` members of `pool` from every (category, risk) cell,
/// drawn without replacement under `seed`. Returned in ascending order.
pub fn stratified_sample<F>(pool: &[usize], cell_of: F, per_cell: usize, seed: u64) -> Vec<usize>
where
    F: Fn(usize) -> (Category, Risk),
{
    let mut cells: BTreeMap<(Category, Risk), Vec<usize>> = BTreeMap::new();
    for &i in pool {
        cells.entry(cell_of(i)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for members in cells.values_mut() {
        members.sort_unstable();
        members.shuffle(&mut rng);
        out.extend(members.iter().take(per_cell));
    }
    out.sort_unstable();
    out
}
