//! Seed derivation. Every stochastic stage draws from its own stream derived
//! from one master seed by hashing a stage label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a stage seed from `master` and a label.
pub fn derive(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut out = [0u8; 8];
    out.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(out)
}

/// RNG for `label`, on stream `stream`. Streams are independent, so stream `i`
/// does not depend on how many other streams were consumed.
pub fn rng(master: u64, label: &str, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive(master, label));
    rng.set_stream(stream);
    rng
}
