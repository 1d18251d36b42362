//! Seeded random streams.
//!
//! Every consumer of randomness (true noise tape, simulated noise, meta
//! perturbations, sampling) gets its own ChaCha stream derived from the run
//! seed, so adding draws to one consumer never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

/// Well-known stream identifiers.
pub mod streams {
    pub const NOISE_TAPE: u64 = 1;
    pub const SIMULATED_NOISE: u64 = 2;
    pub const META: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const EXPLORATION: u64 = 5;
    pub const COSTS: u64 = 6;
    pub const COMPARATOR: u64 = 7;
}

/// Independent stream `id` derived from `seed`.
pub fn stream(seed: u64, id: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
