//! Deterministic random streams.
//!
//! Every Monte Carlo trial draws from its own ChaCha8 stream. The 256-bit key
//! is the SHA-256 digest of `(master seed, scenario id)` and the 64-bit stream
//! selector is the trial index, so a trial's draws depend only on that triple
//! and never on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Identifies a family of random streams: one per trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    key: [u8; 32],
}

impl StreamKey {
    pub fn new(master_seed: u64, scenario: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"trapcal-stream-v1");
        hasher.update(master_seed.to_le_bytes());
        hasher.update((scenario.len() as u64).to_le_bytes());
        hasher.update(scenario.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self { key }
    }

    /// Derives a child key, e.g. for a named sub-experiment of a scenario.
    pub fn child(&self, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        Self { key }
    }

    pub fn stream(&self, trial: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(trial);
        rng
    }
}

/// Shorthand for `StreamKey::new(master_seed, scenario).stream(trial)`.
pub fn trial_rng(master_seed: u64, scenario: &str, trial: u64) -> StreamRng {
    StreamKey::new(master_seed, scenario).stream(trial)
}
