//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 generator keyed by a root
//! seed. Parallel work units (trees, Monte-Carlo chunks) get their own stream
//! number instead of sharing a generator, so results do not depend on how the
//! work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
