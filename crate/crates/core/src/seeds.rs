//! Reproducible random streams.
//!
//! Replicate `i` of any resampling scheme uses seed `base ^ i`, so results do
//! not depend on how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn replicate_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}

pub fn replicate_rng(base: u64, index: usize) -> Rng {
    rng(replicate_seed(base, index))
}
