//! Keyed random streams.
//!
//! Every draw is addressed by `(global seed, unit id, model name)`, so a
//! person's numbers do not depend on iteration order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedRng {
    seed: u64,
}

impl KeyedRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derived generator for a sub-component, e.g. one wave.
    pub fn derive(&self, key: &str) -> KeyedRng {
        let mut rng = self.stream(0, key);
        KeyedRng { seed: rng.random() }
    }

    pub fn stream(&self, id: u64, key: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(id.to_le_bytes());
        h.update((key.len() as u64).to_le_bytes());
        h.update(key.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&self, id: u64, key: &str) -> f64 {
        self.stream(id, key).random::<f64>()
    }
}
