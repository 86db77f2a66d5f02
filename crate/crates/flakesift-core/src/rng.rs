//! Seeded, reproducible randomness helpers.
//!
//! Every stochastic step in the pipeline derives its stream from a u64 seed
//! plus a stable string label, so runs are byte-reproducible regardless of
//! iteration order elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

/// RNG seeded directly from `seed`.
pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for a named substream: hash of (seed, label) so the streams for
/// different tests/epochs/folds are independent and order-insensitive.
pub fn derive_rng(seed: u64, label: &str) -> SeededRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

/// Stable 64-bit seed for a named substream.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Uniform draw in [0, 1).
pub fn uniform(rng: &mut SeededRng) -> f64 {
    rng.gen::<f64>()
}
