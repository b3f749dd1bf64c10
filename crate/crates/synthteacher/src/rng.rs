//! Seeded RNG streams.
//!
//! Every random decision in the crate flows through a `ChaCha8Rng` derived
//! from `(master seed, stream id)`, so runs are reproducible and independent
//! components (teacher init, sampler, student noise, per-scene composition)
//! never share a stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Fixed stream ids for the run-level components.
pub mod stream {
    pub const TEACHER_INIT: u64 = 1;
    pub const SAMPLER: u64 = 2;
    pub const STUDENT: u64 = 3;
    pub const POOL_ASSIGNMENT: u64 = 4;
    pub const PREDICTOR: u64 = 5;
    /// Scene streams start here; scene `i` uses `SCENE_BASE + i`.
    pub const SCENE_BASE: u64 = 1 << 32;
}

/// Deterministic RNG for `(seed, stream)`.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
