//! Deterministic seed derivation.
//!
//! Every random stream in a run is derived from the global seed plus a
//! fixed path of labels, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_CLIENT: u64 = 0x636c_6965_6e74;
pub const STREAM_INIT: u64 = 0x696e_6974;
pub const STREAM_DATA: u64 = 0x6461_7461;
pub const STREAM_SCENARIO: u64 = 0x7363_656e;
pub const STREAM_SPLIT: u64 = 0x0073_706c_6974;
pub const STREAM_ABLATION: u64 = 0x6162_6c61;
pub const STREAM_TRAIN: u64 = 0x0074_7261_696e;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` with each label in turn.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
