//! Deterministic random streams keyed by a root seed and a path of indices,
//! so that independent work units (restarts, splits, replicates) draw from
//! their own streams regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream domains, so that e.g. restart 3 and split 3 never collide.
pub mod domain {
    pub const RESTART: u64 = 0x5245_5354;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const CV_FOLDS: u64 = 0x4346_4f4c;
    pub const REPLICATE: u64 = 0x5245_504c;
    pub const DATA: u64 = 0x4441_5441;
    pub const TARGETS: u64 = 0x5441_5247;
    pub const FIT: u64 = 0x4649_5420;
    pub const INFER: u64 = 0x494e_4652;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed derived from `seed` and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, path))
}
