//! Seeded random streams.
//!
//! Every Monte Carlo replica draws from its own ChaCha8 stream. The splitting
//! rule is: the generator is seeded with `seed_from_u64(seed)` and the replica
//! index selects the ChaCha stream via `set_stream(index)`. Sub-experiments
//! that need unrelated streams under one user seed first derive a child seed
//! with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for replica `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed for a labelled sub-experiment (SplitMix64 finaliser).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed from a string label.
pub fn derive_seed_str(seed: u64, label: &str) -> u64 {
    // FNV-1a keeps labels stable across platforms and compiler versions.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    derive_seed(seed, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: u64 = substream(7, 3).random();
        let b: u64 = substream(7, 3).random();
        let c: u64 = substream(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn derived_seeds_differ_by_label() {
        assert_ne!(derive_seed_str(1, "girsanov"), derive_seed_str(1, "tail"));
        assert_eq!(derive_seed_str(1, "x"), derive_seed_str(1, "x"));
    }
}
