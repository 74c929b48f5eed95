//! Seeding contract for every stochastic routine in the crate.
//!
//! All randomness comes from [`ChaCha8Rng`], whose output stream is fixed by
//! `rand_chacha` for a given seed, so golden tests remain stable across
//! platforms. Replicas never share a stream: each one is seeded with
//! [`split_seed`] applied to the master seed and its index.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as SimRng;

/// Identifier recorded in run manifests.
pub const RNG_ID: &str = "rand_chacha-0.9/ChaCha8Rng; split=splitmix64";

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for replica `index` of `master`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Child seed for a named purpose (stationary references, windows, ...).
pub fn split_seed_tagged(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = 0xCBF2_9CE4_8422_2325u64;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    split_seed(master ^ splitmix64(h), index)
}
