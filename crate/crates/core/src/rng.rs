//! Seeded randomness. Every random draw in the crate goes through a ChaCha8
//! stream keyed by an explicit 64-bit seed; there is no global generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finaliser, used to derive independent child seeds.
pub fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Child seed for stream `tag` at position `index` under `base`.
pub fn derive(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix(base);
    for b in tag.bytes() {
        h = mix(h ^ b as u64);
    }
    mix(h ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}
