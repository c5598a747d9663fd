//! Seeded random streams.
//!
//! All randomness flows through [`SeededRng`], ChaCha with 8 rounds as
//! implemented by `rand_chacha`. The algorithm is fully specified, so a
//! given seed reproduces the same stream on every platform. Independent
//! streams for parallel work are derived with [`stream`], which keeps the
//! key fixed and selects one of the 2^64 ChaCha stream ids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Generator for a top-level seed.
pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `id` under `seed`.
pub fn stream(seed: u64, id: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws a fresh base seed from `rng`, used to fan out into [`stream`]s.
pub fn fork_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}
