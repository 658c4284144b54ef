//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha20 (`rand_chacha`), which
//! produces the same sequence on every platform. A task is identified by a
//! master seed and a 64-bit task index: the generator is seeded with
//! `ChaCha20Rng::seed_from_u64(master)` and then switched to stream number
//! `index` via `set_stream`. Distinct indices give independent,
//! non-overlapping streams, so results never depend on how tasks are
//! scheduled across threads.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

/// Generator for task `index` under master seed `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform draw on `[0, 1)` with 53 bits of precision.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// Uniform draw on `(0, 1]`, safe to pass to `ln`.
pub fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// A child seed for task `index`, for APIs that take a plain seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index).random()
}

/// Random permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Splits `0..n` at random into a first part of size `n1` and the rest.
/// Both parts are returned in increasing index order.
pub fn split_indices(n: usize, n1: usize, seed: u64, index: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = stream(seed, index);
    let perm = permutation(n, &mut rng);
    let mut first = perm[..n1].to_vec();
    let mut second = perm[n1..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}
