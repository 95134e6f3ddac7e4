//! Named seed derivation.
//!
//! Every random stage draws from `derive(seed, stage)` so adding a stage never
//! shifts the streams of existing ones, and replicate `r` of a stage uses
//! `derive_index(stage_seed, r)` regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for a named stage.
pub fn derive(seed: u64, stage: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(stage.as_bytes())))
}

/// Seed for replicate `index` of a stage.
pub fn derive_index(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}

pub fn rng(seed: u64) -> StageRng {
    StageRng::seed_from_u64(seed)
}

pub fn stage_rng(seed: u64, stage: &str) -> StageRng {
    rng(derive(seed, stage))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_stages_get_distinct_seeds() {
        assert_ne!(derive(1, "outcome"), derive(1, "propensity"));
        assert_ne!(derive(1, "outcome"), derive(2, "outcome"));
        assert_eq!(derive(7, "x"), derive(7, "x"));
        assert_ne!(derive_index(3, 0), derive_index(3, 1));
    }
}
