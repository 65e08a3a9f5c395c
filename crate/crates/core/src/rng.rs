//! Deterministic seed streams.
//!
//! Every path (or bucket) draws from its own ChaCha stream keyed by the master
//! seed and its index, so results do not depend on how work is split across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream offset reserved for auxiliary draws (refinement, conditional
/// continuations) so they never collide with the primary per-path streams.
pub const AUX_STREAM_BASE: u64 = 1 << 40;

pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` on a rayon pool with `workers` threads (0 = rayon default).
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}
