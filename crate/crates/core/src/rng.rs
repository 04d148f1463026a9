//! Seeded random streams.
//!
//! Every stage draws from its own named stream derived from the run seed, so
//! changing how many numbers one stage consumes never shifts another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Derive an independent generator for `name` from the run seed.
pub fn stream(seed: u64, name: &str) -> SimRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(name.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Well-known stream names.
pub mod streams {
    pub const CORPUS: &str = "corpus";
    pub const TRAIN: &str = "train";
    pub const SYNTH: &str = "synth";
    pub const EVAL: &str = "eval";
    pub const CORRUPT: &str = "corrupt";
}
