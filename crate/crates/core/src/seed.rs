//! Deterministic seed derivation.
//!
//! Every random draw in the pipeline comes from a ChaCha8 stream whose seed is
//! derived from `(master seed, stream tag, item index)`, so results do not
//! depend on iteration order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent consumers of the master seed apart.
pub mod stream {
    pub const RAW_SPECTRA: u64 = 1;
    pub const RAW_NOISE: u64 = 2;
    pub const OVERSAMPLE: u64 = 3;
    pub const AUGMENT: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const INIT: u64 = 6;
    pub const SHUFFLE: u64 = 7;
    pub const TEST_SET: u64 = 8;
    pub const BENCH: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_mul(0x1000_0000_01B3) ^ splitmix64(index)))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, stream: u64, index: u64) -> ChaCha8Rng {
    rng_from(derive_seed(master, stream, index))
}
