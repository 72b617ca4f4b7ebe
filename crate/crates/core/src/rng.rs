//! Seed management.
//!
//! All randomness in the crate flows from a single 64-bit seed. Replicate
//! ensembles derive one independent ChaCha stream per replicate from
//! `(seed, stream)`, so ensembles are reproducible and order-independent.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent stream domains, so that e.g. the forward and backward sides
/// of a duality check never share randomness.
pub const STREAM_FORWARD: u64 = 0;
pub const STREAM_BACKWARD: u64 = 1 << 32;
pub const STREAM_AUX: u64 = 1 << 33;

/// RNG for replicate `index` within stream domain `domain`.
pub fn replicate_rng(seed: u64, domain: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(domain.wrapping_add(index));
    rng
}

/// RNG for a one-off (non-ensemble) computation.
pub fn single_rng(seed: u64) -> ChaCha12Rng {
    replicate_rng(seed, STREAM_AUX, 0)
}
