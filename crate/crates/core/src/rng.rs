//! Counter-based seed derivation.
//!
//! Every random quantity in the simulator is drawn from a generator whose seed
//! is a hash of the run seed and a tuple of indices (user, day, item, stream).
//! Outcomes therefore do not depend on the order of evaluation or the number
//! of worker threads, and two policies run on the same user see identical
//! draws wherever their actions coincide.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator used for all simulation streams.
pub type SimRng = Xoshiro256PlusPlus;

/// Stream tags separating independent uses of the same indices.
pub mod stream {
    pub const CATALOGUE: u64 = 0x01;
    pub const USER: u64 = 0x02;
    pub const LIFETIME: u64 = 0x03;
    pub const SHOCK: u64 = 0x04;
    pub const LISTEN: u64 = 0x05;
    pub const POLICY: u64 = 0x06;
    pub const ARM: u64 = 0x07;
    pub const HOLDBACK: u64 = 0x08;
    pub const BOOTSTRAP: u64 = 0x09;
    pub const AUXILIARY: u64 = 0x0a;
    pub const TOY: u64 = 0x0b;
    pub const TARGET: u64 = 0x0c;
    pub const AGE: u64 = 0x0d;
    pub const MIX: u64 = 0x0e;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` with an ordered list of tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

/// Generator seeded from `derive_seed(base, tags)`.
pub fn rng_for(base: u64, tags: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(base, tags))
}

/// Uniform in [0, 1) derived directly from a hash, for one-off draws.
pub fn hash_uniform(base: u64, tags: &[u64]) -> f64 {
    (derive_seed(base, tags) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
