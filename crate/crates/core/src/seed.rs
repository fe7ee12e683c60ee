//! Fan-out of a single master seed into independent per-consumer seeds.
//!
//! A consumer seed is `splitmix64(master ^ fnv1a64(tag))`, where `tag` names the
//! consumer (`"split"`, `"folds"`, `"init/3"`, `"search"`, ...). Changing one
//! consumer's tag never perturbs another consumer's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SPLIT: &str = "split";
pub const FOLDS: &str = "folds";
pub const SEARCH: &str = "search";
pub const INIT: &str = "init";
/// Refit of a chosen configuration on a whole training set.
pub const FINAL: &str = "final";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive(master: u64, tag: &str) -> u64 {
    splitmix64(master ^ fnv1a64(tag.as_bytes()))
}

pub fn derive_indexed(master: u64, tag: &str, index: usize) -> u64 {
    derive(derive(master, tag), &index.to_string())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
