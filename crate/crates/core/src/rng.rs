//! Counter-based random streams.
//!
//! Every randomized stage draws from a stream keyed by (seed, stage, step,
//! chunk), so results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Particles handled per random stream in data-parallel stages.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Predict = 1,
    Birth = 2,
    Resample = 3,
    Test = 99,
}

pub fn stream(seed: u64, stage: Stage, step: u64, chunk: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&(stage as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(chunk);
    rng
}
