//! Seed derivation.
//!
//! Every random consumer gets its own stream derived from a master seed and a
//! stream identifier: `derive_seed(master, stream) = splitmix64(master ^
//! splitmix64(stream))`. Streams are fixed constants, so adding a consumer
//! never perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers for the experiment pipeline.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const NN_FORWARD: u64 = 2;
    pub const NN_INVERSE: u64 = 3;
    pub const GP: u64 = 4;
    pub const LSTM: u64 = 5;
    pub const SYNTH: u64 = 6;
    pub const TUNING: u64 = 7;
    pub const RATE_NOISE: u64 = 8;
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
