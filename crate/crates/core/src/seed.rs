//! Seed derivation for independent random streams.
//!
//! Every stochastic unit of work (an episode, a rollout, a training run) owns
//! its generator, seeded from a master seed and a path of indices. Results are
//! therefore independent of scheduling and thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a parent seed with a child index.
pub fn derive(parent: u64, index: u64) -> u64 {
    splitmix(splitmix(parent) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Mixes a parent seed with a path of child indices.
pub fn derive_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &i| derive(s, i))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Stream tags keep unrelated consumers of one master seed apart.
pub mod stream {
    pub const COLLECT: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const RCPI: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const EXPORT: u64 = 5;
}
