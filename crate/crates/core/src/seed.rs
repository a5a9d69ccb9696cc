//! Seeding contract.
//!
//! Every random stream is a ChaCha8 generator seeded through
//! `ChaCha8Rng::seed_from_u64`. Child streams are derived from a parent seed,
//! a stream tag and an index:
//!
//! ```text
//! sub_seed(parent, tag, index) = mix(mix(parent ^ mix(tag)) ^ index)
//! ```
//!
//! where `mix` is the SplitMix64 output function (add the golden-ratio
//! increment, then two xor-shift-multiply rounds). `mix` is a bijection on
//! `u64`, so distinct indices under one (parent, tag) never collide. Streams
//! depend only on their index, never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Replicate datasets of a simulation scenario.
pub const TAG_REPLICATE: u64 = 0x5245_504c;
/// Independent datasets for the empirical standard deviation.
pub const TAG_EMPIRICAL: u64 = 0x454d_5053;
/// Bootstrap streams under a replicate (or under the analysis seed).
pub const TAG_BOOT_WEIGHTED: u64 = 0x4257_4754;
pub const TAG_BOOT_STRATIFIED: u64 = 0x4253_5452;

pub type SimRng = ChaCha8Rng;

#[inline]
pub fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn sub_seed(parent: u64, tag: u64, index: u64) -> u64 {
    mix(mix(parent ^ mix(tag)) ^ index)
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
