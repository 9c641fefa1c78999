//! Deterministic random streams.
//!
//! Every random draw comes from a ChaCha8 generator (`rand_chacha` 0.9.0,
//! pinned) keyed by the master seed through `SeedableRng::seed_from_u64`,
//! with the 64-bit stream id selecting an independent sub-stream. Normal
//! variates use the `rand_distr` 0.5.1 ziggurat sampler. Pinning both
//! crates makes a seed reproduce the same numbers on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Purpose of a stream; keeps simulation and bootstrap draws disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Bootstrap = 1,
    Dataset = 2,
    Oracle = 3,
    Replication = 4,
}

const INDEX_BITS: u32 = 52;

/// Generator for `(master, domain, index, attempt)`.
pub fn stream(master: u64, domain: Domain, index: u64, attempt: u8) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    let id = ((domain as u64) << 60) | ((index & ((1 << INDEX_BITS) - 1)) << 8) | attempt as u64;
    rng.set_stream(id);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for replication `index` of a study seeded with `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix(master ^ mix(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}
