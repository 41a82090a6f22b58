//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), whose output
//! is fixed by its algorithm and therefore identical across platforms and
//! releases. A run derives independent streams from one seed by selecting a
//! different ChaCha stream number per consumer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream numbers handed to the consumers of one simulation seed.
pub mod stream {
    pub const WORKLOAD: u64 = 1;
    pub const STRATEGY: u64 = 2;
}

pub fn new_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of `seed`.
pub fn derive_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = new_rng(seed);
    rng.set_stream(stream);
    rng
}
