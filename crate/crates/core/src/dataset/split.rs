use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sizes of an 8:1:1 split of `n` items.
///
/// Dev and test each get `round(n / 10)` (at least one), train gets the
/// rest: 5167 -> (4133, 517, 517), 10 -> (8, 1, 1), 3 -> (1, 1, 1).
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < 3 {
        return Err(Error::TooFewMatches(n));
    }
    let tenth = ((n as f64) / 10.0).round().max(1.0) as usize;
    Ok((n - 2 * tenth, tenth, tenth))
}

/// Shuffles `items` under `seed` and partitions them 8:1:1 into
/// (train, dev, test).
pub fn split_dataset<T>(items: Vec<T>, seed: u64) -> Result<(Vec<T>, Vec<T>, Vec<T>)> {
    let (n_train, n_dev, _) = split_sizes(items.len())?;
    let mut items = items;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
    let test = items.split_off(n_train + n_dev);
    let dev = items.split_off(n_train);
    Ok((items, dev, test))
}
