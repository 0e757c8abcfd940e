//! Seed derivation. Every stochastic stage draws from a ChaCha stream whose
//! seed is a pure function of a base seed and a list of integer tags, so
//! results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `base` with `tags` into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0xA5A5_A5A5)));
    }
    h
}

pub fn rng_from(base: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(base, tags))
}

#[inline]
pub fn normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}
