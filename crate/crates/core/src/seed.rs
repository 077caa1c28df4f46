//! Sub-seed derivation from a single master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministically derives a sub-seed from `(master, component, counter)`.
pub fn derive(master: u64, component: &str, counter: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((component.len() as u64).to_le_bytes());
    h.update(component.as_bytes());
    h.update(counter.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

/// The RNG used everywhere in the workspace.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
