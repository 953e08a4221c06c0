//! Seed derivation.
//!
//! All randomness in a run flows from a single 64-bit master seed. Each
//! consumer derives its own stream seed with [`derive_seed`], a counter-based
//! split: `splitmix64(master ^ splitmix64(stream_id))`. Streams are stable
//! identifiers, so adding a consumer never perturbs existing ones, and
//! parallel consumers stay decorrelated.

/// Stream identifiers for the standard pipeline stages.
pub mod stream {
    pub const FOREST: u64 = 1;
    pub const MULTI_START: u64 = 2;
    pub const BASELINE: u64 = 3;
    pub const VERIFY: u64 = 4;
}

/// SplitMix64 output function; one full mixing round.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive the seed for one named stream from the master seed.
pub fn derive_seed(master: u64, stream_id: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream_id))
}
