//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha8, a counter-based
//! generator: a 64-bit root seed picks the key and a stream id picks an
//! independent keystream, so `(root, id)` pairs reproduce bit-for-bit
//! regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StreamRng;

pub const DEFAULT_SEED: u64 = 42;

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `id` under `root`.
pub fn stream(root: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(root);
    r.set_stream(id);
    r
}

/// SplitMix64 mix of `(root, id)`, for handing a plain seed to a sub-task.
pub fn derive_seed(root: u64, id: u64) -> u64 {
    let mut z = root ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
