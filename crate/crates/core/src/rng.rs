//! Seed derivation.
//!
//! Every run starts from one `u64` seed. Sub-seeds for independent consumers
//! (scenario noise, weight init, shuffling, each tree of a forest, each grid
//! cell) are derived with [`derive_seed`], which runs the parent seed and a
//! stream tag through the splitmix64 finalizer. Consumers then seed a
//! ChaCha8 generator from the derived value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `tag` under `parent`.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used across the crate.
pub mod tag {
    pub const SIMULATION: u64 = 1;
    pub const INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const FOREST: u64 = 4;
    pub const GRID: u64 = 5;
    pub const BOOTSTRAP: u64 = 6;
}
