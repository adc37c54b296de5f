//! Deterministic seed derivation.
//!
//! Every run's RNG stream is a pure function of the master seed, the
//! method's identity, the grid point and the repetition index. Seeds never
//! depend on execution order or on which other methods share the spec, so
//! removing a method or resizing the worker pool cannot change any other
//! run's draws.

use sha2::{Digest, Sha256};

/// Derive the 64-bit RNG seed for one run.
///
/// The key is hashed as the string `master|method|grid|repetition` and the
/// first eight digest bytes are read little-endian.
pub fn derive_seed(master_seed: u64, method: &str, grid_id: &str, repetition: usize) -> u64 {
    let key = format!("{master_seed}|{method}|{grid_id}|{repetition}");
    let digest = Sha256::digest(key.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("SHA-256 digest has 32 bytes"))
}
