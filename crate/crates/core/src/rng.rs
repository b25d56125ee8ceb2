//! Per-episode random streams.
//!
//! Every consumer of randomness in an episode draws from its own ChaCha
//! stream derived from the episode seed, so adding draws in one place never
//! shifts the sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Placement = 0,
    Comms = 1,
    Policy = 2,
    Gating = 3,
}

pub fn episode_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
