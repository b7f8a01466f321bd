//! Seeding helpers.
//!
//! All randomness in this crate flows through [`ChaCha8Rng`], which has a
//! stable, documented output stream for a given seed. Substreams (one per
//! glyph, one per class prototype, ...) are derived with a splitmix64 chain
//! so that consuming one stream never perturbs another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 step; used only to derive subseeds, never as the main generator.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a subseed from a master seed and a list of stream labels.
pub fn subseed(master: u64, labels: &[u64]) -> u64 {
    let mut state = splitmix64(master);
    for &label in labels {
        state = splitmix64(state ^ label);
    }
    state
}

/// The crate-wide deterministic generator for a given seed.
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
