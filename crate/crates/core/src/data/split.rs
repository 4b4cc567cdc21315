use super::schema::{Dataset, Split};
use crate::numeric::Rng;

/// Shuffled 8:1:1 partition of `0..n`: valid and test each get `⌊n/10⌋`
/// rows, train keeps the remainder.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derived(seed, 0x5EED_5911).shuffle(&mut order);
    let held = n / 10;
    let test = order.split_off(n - held);
    let valid = order.split_off(n - 2 * held);
    (order, valid, test)
}

pub fn split_dataset(d: &Dataset, seed: u64) -> (Dataset, Dataset, Dataset) {
    let (tr, va, te) = split_indices(d.len(), seed);
    (
        d.subset(&tr, Some(Split::Train)),
        d.subset(&va, Some(Split::Valid)),
        d.subset(&te, Some(Split::Test)),
    )
}
