//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`) keyed through
//! `SeedableRng::seed_from_u64`. Independent sub-streams are derived from a base
//! seed and a tag with the SplitMix64 finalizer, so e.g. the noise sequence does not
//! depend on how many samples the signal generator consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `base` and a numeric `tag`.
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    mix64(mix64(base) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
