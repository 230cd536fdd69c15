//! Seed derivation. Every random stream in the crate descends from one master
//! seed through [`derive`], so a single override reseeds everything.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a path of integer tags.
pub fn derive(parent: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix(parent), |acc, &t| mix(acc ^ mix(t)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags, kept distinct so unrelated draws never share a stream.
pub mod tag {
    pub const PHANTOM: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const OMEGA: u64 = 3;
    pub const LAMBDA: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const BANK: u64 = 6;
    pub const VALIDATION: u64 = 7;
}
