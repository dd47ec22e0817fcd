//! Seed derivation and counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is a
//! 64-bit seed and whose stream id is a counter (packet index, sample index,
//! ...). Streams are independent of scheduling, so parallel runs reproduce
//! serial ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a tag. Distinct tags give
/// unrelated seeds.
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    mix64(mix64(parent) ^ tag.rotate_left(17) ^ 0x5851_f42d_4c95_7f2d)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
