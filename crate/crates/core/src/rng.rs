//! Counter-based random streams: every utterance, epoch or generation step draws
//! from its own ChaCha stream of a run seed, never from shared state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pack two counters into one stream id.
pub fn stream_id(major: u64, minor: u64) -> u64 {
    (major << 32) ^ minor
}
