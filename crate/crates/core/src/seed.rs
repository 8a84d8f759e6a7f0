//! Seed derivation and the random number generator contract.
//!
//! Every sampler in the crate draws from [`ChaCha8Rng`] seeded with
//! [`rng_from_seed`], i.e. `ChaCha8Rng::seed_from_u64(seed)`. ChaCha is a
//! counter-based stream cipher, so the stream is identical on every platform.
//!
//! Replicated experiments derive per-replica seeds with [`mix_seed`]:
//!
//! ```text
//! z  = base + (index + 1) * 0x9E37_79B9_7F4A_7C15        (wrapping u64)
//! z  = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9            (wrapping)
//! z  = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB            (wrapping)
//! seed = z ^ (z >> 31)
//! ```
//!
//! This is the SplitMix64 output function applied to the `index + 1`-th
//! SplitMix64 state after `base`.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn avalanche(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` derived from `base`.
pub fn mix_seed(base: u64, index: u64) -> u64 {
    avalanche(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
