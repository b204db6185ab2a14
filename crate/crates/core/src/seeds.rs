//! Hierarchical seed derivation.
//!
//! All randomness in a run hangs off one 64-bit seed. Child seeds are derived
//! by folding tags (generation, individual index, purpose, ...) through the
//! SplitMix64 finaliser, which is stable across platforms and releases, so
//! external tools can predict any stream from the documented tags.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. The numeric values are part of the reproducibility
/// contract and must never be renumbered.
pub mod purpose {
    pub const PALETTE: u64 = 1;
    pub const EPISODE: u64 = 2;
    pub const ACTIONS: u64 = 3;
    pub const INIT: u64 = 4;
    pub const LEARN: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const FITNESS: u64 = 7;
    pub const REPRODUCE: u64 = 8;
    pub const COMPLEXITY: u64 = 9;
    pub const SEED_SPLIT: u64 = 10;
    pub const RUN: u64 = 11;
    pub const BOOTSTRAP: u64 = 12;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and an ordered list of tags.
pub fn derive(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(parent), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// A ChaCha8 stream seeded from `derive(parent, tags)`.
pub fn stream(parent: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(parent, tags))
}
