//! Seeded, platform-independent randomness.
//!
//! All randomness goes through ChaCha8 (a counter-based stream cipher
//! generator). Replicates never share a generator: each one derives its own
//! seed from the experiment seed and its index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Generator for `seed`, positioned on stream `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer of `(base, index)`; used to derive per-replicate seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a seed from a base and a path of indices.
pub fn derive_path(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(base, |acc, &i| derive_seed(acc, i))
}
