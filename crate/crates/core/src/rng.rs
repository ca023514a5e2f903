//! Seeded, splittable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used by every stochastic routine.
pub type SegaRng = ChaCha8Rng;

/// Independent stream `stream` derived from `seed`.
///
/// Streams with different indices never overlap, so problem generation,
/// initial points and sketch draws can be seeded from one user seed.
pub fn stream(seed: u64, stream: u64) -> SegaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const STREAM_PROBLEM: u64 = 1;
pub const STREAM_START: u64 = 2;
pub const STREAM_ALGORITHM: u64 = 3;
pub const STREAM_DATA: u64 = 4;
