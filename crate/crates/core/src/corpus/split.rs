use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Train / cross-validation / test fractions used for the synthetic corpus.
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.88, 0.02, 0.10);

/// Seeded disjoint partition into (train, cv, test).
///
/// Train and cv sizes are rounded from their fractions; test takes the rest.
pub fn split_corpus<T: Clone>(
    items: &[T],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (a, b, c) = fractions;
    if [a, b, c].iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::Validation(format!("negative split fraction in {fractions:?}")));
    }
    if ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("split fractions {fractions:?} do not sum to 1")));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((a * n as f64).round() as usize).min(n);
    let n_cv = ((b * n as f64).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_cv]),
        pick(&order[n_train + n_cv..]),
    ))
}
