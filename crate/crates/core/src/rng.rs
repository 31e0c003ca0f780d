//! Seed handling.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value. Independent sub-streams (replicates, folds, restarts) are derived
//! from a master seed with [`sub_seed`], which runs the SplitMix64 finalizer
//! over `master ^ golden * (index + 1)`. The mapping is fixed so that tables
//! produced by one build can be regenerated bit-for-bit by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of stream `index` under `master`.
pub fn sub_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ GOLDEN.wrapping_mul(index.wrapping_add(1)))
}

/// Two-level derivation, e.g. (sweep point, replicate).
pub fn sub_seed2(master: u64, a: u64, b: u64) -> u64 {
    sub_seed(sub_seed(master, a), b)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
