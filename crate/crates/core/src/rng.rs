//! Reproducible random streams.
//!
//! Every replication draws from its own ChaCha8 stream. The 256-bit key is
//! `SHA-256(master_seed_le || purpose)` and the ChaCha stream number is the
//! replication index, so `substream = hash(master_seed, purpose, index)` and
//! results do not depend on the order in which replications are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master_seed: u64,
}

impl Streams {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self, purpose: &str, index: u64) -> SimRng {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(purpose.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }

    /// Child family of streams, for experiments that are themselves composed
    /// of several seeded stages.
    pub fn derive(&self, purpose: &str) -> Streams {
        let mut hasher = Sha256::new();
        hasher.update(self.master_seed.to_le_bytes());
        hasher.update(b"derive:");
        hasher.update(purpose.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 8];
        seed.copy_from_slice(&digest[..8]);
        Streams::new(u64::from_le_bytes(seed))
    }
}
