//! Deterministic random streams keyed by tuples rather than by draw order.
//!
//! Every stochastic decision in the engine derives its generator from
//! `(seed, label, key...)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn keyed_rng(seed: u64, label: &str, key: &[&str]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for part in key {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Derives a child seed, e.g. one per dataset line from a master seed.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    use rand::RngCore;
    keyed_rng(seed, label, &[&index.to_string()]).next_u64()
}
