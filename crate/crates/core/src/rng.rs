//! Seeded random streams.
//!
//! Every random consumer derives its own ChaCha stream from `(seed, stream)`,
//! so results never depend on thread count or call order elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream `stream` of generator `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids reserved for specific purposes, kept far apart from the
/// per-row streams (which use the row index directly).
pub(crate) mod streams {
    pub const PERMUTATION: u64 = (1 << 40) + 1;
    pub const SAMPLING: u64 = (1 << 40) + 2;
    pub const INIT: u64 = (1 << 40) + 3;
    pub const BATCHES: u64 = (1 << 40) + 4;
    pub const TREE: u64 = (1 << 40) + 5;
    pub const SPLIT: u64 = (1 << 40) + 6;
    pub const TEXT: u64 = (1 << 40) + 7;
}
