//! Seed derivation.
//!
//! Every stochastic component draws from a [`ChaCha8Rng`] seeded by mixing a
//! root seed with a short list of tags (for example `[STREAM, day, hour]`).
//! ChaCha8 output is specified bit-for-bit, so runs are reproducible across
//! platforms, and independent (day, hour) cells can be generated in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Tags separating the independent random streams of one experiment.
pub mod tag {
    pub const STREAM: u64 = 0x5354_5245_414d;
    pub const ENV: u64 = 0x454e_56;
    pub const INIT: u64 = 0x494e_4954;
    pub const EXPLORE: u64 = 0x4558_504c;
    pub const REPLAY: u64 = 0x5245_504c;
    pub const TRAIN: u64 = 0x5452_4149_4e;
    pub const EVAL: u64 = 0x4556_414c;
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_for(seed: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, tags))
}
