//! Seed derivation.
//!
//! A single global seed fans out to per-component seeds by mixing it with a
//! component label and an index through SplitMix64. The derivation is stable
//! across platforms and releases; changing it changes every reproduced run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for `label` (e.g. `"train"`, `"explain"`, `"plan"`) and
/// an index (sweep cell, node id, ...) from a global seed.
pub fn derive(global: u64, label: &str, index: u64) -> u64 {
    // FNV-1a over the label keeps the mapping independent of std's hasher.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(mix64(global ^ h).wrapping_add(index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_separates_labels_and_indices() {
        let a = derive(7, "train", 0);
        assert_eq!(a, derive(7, "train", 0));
        assert_ne!(a, derive(7, "explain", 0));
        assert_ne!(a, derive(7, "train", 1));
        assert_ne!(a, derive(8, "train", 0));
    }
}
