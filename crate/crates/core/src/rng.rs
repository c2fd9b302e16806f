//! Deterministic RNG streams.
//!
//! Every random draw in the simulator comes from a ChaCha stream keyed by the
//! run seed plus a short path of indices (sweep point, shot, purpose), so
//! results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream purpose tags, kept distinct so spin dynamics and sensing never
/// share draws.
pub mod purpose {
    pub const SPIN: u64 = 0x5350_494e;
    pub const SENSOR: u64 = 0x5345_4e53;
    pub const HERALD: u64 = 0x4845_5241;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const DRIFT: u64 = 0x4452_4946;
    pub const LOADING: u64 = 0x4c4f_4144;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a seed with an index path into a 64-bit stream key.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_key(seed, path))
}
