//! Seeded random streams.
//!
//! Every stochastic task draws from its own ChaCha8 stream, identified by the
//! pair `(seed, task)`: the generator is seeded from `seed` and its stream
//! counter set to `task`. Task numbering is fixed by the schedule of the
//! pipeline, never by thread scheduling, so results are reproducible whatever
//! the degree of parallelism.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(seed: u64, task: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}
