//! Counter-based random streams. A `(seed, stream)` pair names an independent
//! ChaCha keystream, so replicate `r` or fold `f` always sees the same numbers
//! no matter how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Default seed for every command when none is given.
pub const DEFAULT_SEED: u64 = 20_240_521;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from `(seed, stream)`, for handing to code that takes a
/// plain seed (the CV planner, for instance).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    stream_rng(seed ^ 0x9E37_79B9_7F4A_7C15, stream).next_u64()
}
