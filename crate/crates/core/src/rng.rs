//! Keyed random streams.
//!
//! Every stochastic component draws from a ChaCha stream whose key is built
//! from `(seed, replication, stream)`, so results do not depend on the order
//! in which replications or ensemble members are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream identifiers used across the crate.
pub mod streams {
    pub const DESIGN: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const TEST_DESIGN: u64 = 3;
    pub const TEST_NOISE: u64 = 4;
    pub const SUBSAMPLES: u64 = 10;
    pub const FOLDS: u64 = 11;
}

pub fn keyed_rng(seed: u64, replication: u64, stream: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}
