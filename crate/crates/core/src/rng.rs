//! Seeded random streams.
//!
//! Splitting rule, version 1: the stream for `(seed, label)` is a ChaCha8
//! generator keyed by `seed` with its 64-bit stream id set to `label`.
//! Labels are small integers chosen by the caller (trial index, sample index).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::C64;

pub const SPLIT_RULE_VERSION: u32 = 1;

pub fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label);
    rng
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Complex Gaussian with E|z|² = 1.
pub fn complex_normal(rng: &mut ChaCha8Rng) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    C64::new(normal(rng) * s, normal(rng) * s)
}

pub fn complex_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| complex_normal(rng)).collect()
}
