//! Deterministic random streams.
//!
//! Every experiment draws from ChaCha8 seeded through [`stream`]; sub-streams
//! for parallel batches are derived with SplitMix64 so results do not depend
//! on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-stream `index` of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Uniform draw from the half-open interval `(lo, hi]`.
pub fn uniform_left_open<R: rand::Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let r: f64 = rng.gen(); // [0, 1)
    let u = hi - (hi - lo) * r;
    if u <= lo {
        hi
    } else {
        u
    }
}
