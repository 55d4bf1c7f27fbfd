//! Deterministic randomness.
//!
//! Two generators are used, both documented here so runs are bitwise
//! reproducible across machines and thread counts:
//!
//! - **SplitMix64** (Steele, Lea & Flood 2014) as a counter-based
//!   generator: environment valuations are a pure function of
//!   `(seed, round)`, so any round of any replication can be regenerated
//!   independently and in parallel.
//! - **ChaCha8** as a sequential per-episode stream for the algorithms'
//!   own randomization (arm draws).  Each `(base_seed, horizon, rep)`
//!   triple derives an independent stream key via SplitMix64.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One SplitMix64 output step.
#[inline]
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix two words into one stream key.
#[inline]
pub fn mix2(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b)
}

/// Mix three words into one stream key.
#[inline]
pub fn mix3(a: u64, b: u64, c: u64) -> u64 {
    splitmix64(mix2(a, b) ^ c.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform draw in `[0,1)` as a pure function of `(seed, counter)`.
#[inline]
pub fn counter_uniform(seed: u64, counter: u64) -> f64 {
    let bits = splitmix64(splitmix64(seed ^ counter.wrapping_mul(0xA24B_AED4_963E_E407)));
    // 53 high bits -> [0,1) with full double precision.
    (bits >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
}

/// Sequential stream for one episode.
pub fn episode_rng(base_seed: u64, horizon: u64, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix3(base_seed, horizon, rep))
}
