//! Seed derivation.
//!
//! Every random stream in the toolkit is a ChaCha8 generator seeded from a
//! master seed and a fixed stream tag, so a single `--seed` reproduces a run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 0x5350_4c49;
pub const STREAM_AUTOENCODER: u64 = 0x4155_544f;
pub const STREAM_KMEANS: u64 = 0x4b4d_4e53;
pub const STREAM_INIT: u64 = 0x494e_4954;
pub const STREAM_SHUFFLE: u64 = 0x5348_4646;
pub const STREAM_DROPOUT: u64 = 0x4452_4f50;
pub const STREAM_FOREST: u64 = 0x4652_5354;
pub const STREAM_BOOTSTRAP: u64 = 0x424f_4f54;
pub const STREAM_BACKGROUND: u64 = 0x424b_4752;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream tag into an independent child seed.
pub fn derive(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream)
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream))
}
