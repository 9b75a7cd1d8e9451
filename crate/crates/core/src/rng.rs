//! Portable random sampling.
//!
//! All randomness flows through ChaCha8 (`rand_chacha::ChaCha8Rng`), seeded
//! with `seed_from_u64`; restart `r` uses stream `r` of that seed. Floats are
//! drawn as `(next_u64 >> 11) * 2^-53`, so a generated instance is a pure
//! function of the seed on every platform and can be reproduced by any
//! ChaCha8 implementation.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn seeded_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on `[0, 1)`.
pub fn unit(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * INV_2_53
}

/// Uniform on the open interval `(0, 1)`.
pub fn unit_open(rng: &mut Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * INV_2_53
}

/// Uniform on `[low, high)`.
pub fn uniform(rng: &mut Rng, low: f64, high: f64) -> f64 {
    low + (high - low) * unit(rng)
}

/// Uniform integer in `0..n` (`n > 0`).
pub fn index(rng: &mut Rng, n: usize) -> usize {
    debug_assert!(n > 0);
    ((unit(rng) * n as f64) as usize).min(n - 1)
}

/// SplitMix64 finalizer, used to derive independent seeds from tuples.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
