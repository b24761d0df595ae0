//! Seeded random streams.
//!
//! Every run uses ChaCha8 seeded from the 64-bit run seed. Stream 0 drives
//! per-step sampling, stream `1 + e` shuffles epoch `e` of the
//! without-replacement variants, and [`INIT_STREAM`] draws initial
//! embeddings. Streams never overlap, so traces are reproducible on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const STEP_STREAM: u64 = 0;
pub const INIT_STREAM: u64 = u64::MAX;

pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn epoch_stream(seed: u64, epoch: usize) -> StreamRng {
    stream(seed, 1 + epoch as u64)
}

/// Derives an independent seed for sub-task `index` (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
