//! Counter-based seeded randomness.
//!
//! Every stream is keyed by `(seed, label)` and addressed by a 64-bit
//! counter, so the numbers drawn for one patient never depend on how many
//! other cohorts or patients were generated before it.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
