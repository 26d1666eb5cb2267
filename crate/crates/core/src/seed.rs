//! Stable seed derivation.
//!
//! Every random stream in the crate is derived from one master seed so that
//! results do not depend on thread scheduling or call order. The mixing
//! functions are fixed (SplitMix64 finalizer, FNV-1a for labels) and must not
//! change between releases, otherwise stored experiments stop reproducing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Derives the seed of substream `index` of `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derives a named substream, e.g. `derive_named(seed, "split")`.
pub fn derive_named(seed: u64, label: &str) -> u64 {
    derive(seed, fnv1a(label))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
