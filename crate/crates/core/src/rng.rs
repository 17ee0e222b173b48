//! Seeded randomness.
//!
//! All randomness flows from ChaCha8 streams, which produce the same sequence
//! on every platform for a given seed and stream id. Independent consumers
//! (train split vs test split, grid cells, folds) get distinct stream ids
//! rather than ad-hoc reseeding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds from several keys.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(mix(base), |acc, &k| mix(acc ^ mix(k)))
}
