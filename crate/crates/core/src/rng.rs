//! Deterministic, schedule-independent random streams.
//!
//! A master seed plus a stream index selects an independent ChaCha20 stream,
//! so work items can draw their randomness in any order (or on any thread)
//! and still reproduce bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream family tags keep different consumers of one master seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamKind {
    Surrogate = 1,
    Chain = 2,
    Synth = 3,
    Simulate = 4,
}

/// Returns the RNG for `(seed, kind, index)`.
pub fn stream(seed: u64, kind: StreamKind, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Mixes a seed with a label so derived seeds do not collide.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(label.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
