//! Seed derivation. Every random stream in the pipeline is a ChaCha8 generator
//! seeded from a parent seed mixed with a textual tag, so independent jobs get
//! independent but reproducible streams regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `tag` into `parent`, e.g. `derive_seed(master, "HB-003")`.
pub fn derive_seed(parent: u64, tag: &str) -> u64 {
    let mut h = FNV_OFFSET;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(splitmix64(parent) ^ h)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parent: u64, tag: &str) -> ChaCha8Rng {
    rng_from(derive_seed(parent, tag))
}
