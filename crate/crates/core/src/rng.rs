//! Seed handling.
//!
//! Every random stream is a ChaCha8 generator whose 256-bit key is the
//! SHA-256 digest of `(master seed, label, index)`. Streams for different
//! replications or purposes therefore never overlap, and any replication can
//! be regenerated in isolation, in any order, on any worker.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Generator for a bare 64-bit seed.
pub fn from_seed(seed: u64) -> SimRng {
    child(seed, "root", 0)
}

/// Independent generator keyed by `(master, label, index)`.
pub fn child(master: u64, label: &str, index: u64) -> SimRng {
    SimRng::from_seed(key(master, label, index))
}

/// 64-bit seed derived the same way, for APIs that take a plain seed.
pub fn child_seed(master: u64, label: &str, index: u64) -> u64 {
    let k = key(master, label, index);
    u64::from_le_bytes(k[..8].try_into().unwrap())
}

fn key(master: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}
