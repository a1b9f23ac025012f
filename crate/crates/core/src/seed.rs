//! Seed derivation. All randomness in a run flows from one master seed;
//! each component draws its own stream via a hash of its name, so trials
//! and components can run in parallel without sharing RNG state.

use sha2::{Digest, Sha256};

/// Derive a component seed from the master seed and a component name.
pub fn seed_for(master: u64, component: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(component.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
