//! Deterministic random streams.
//!
//! Every random draw in the pipeline flows from a single global seed.
//! Stage streams are derived by hashing the global seed together with a
//! stage path such as `"dataset/train/3/1/42"`, so each stage (and each
//! sample within a stage) is independently reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a reproducible RNG for `path` from the global seed.
pub fn derive_rng(global_seed: u64, path: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(path.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
