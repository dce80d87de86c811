//! Seeded, stream-addressable random number generation.
//!
//! Every stochastic routine derives its generator from `(seed, stream)` so
//! that results do not depend on execution order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Counter-based generator for the given seed and stream index.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
