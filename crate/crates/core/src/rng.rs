//! Seeded random streams.
//!
//! Every random draw in the crate comes from a [`Stream`], a ChaCha8 generator
//! seeded through `SeedableRng::seed_from_u64`. Gaussian variates use the
//! ziggurat sampler of `rand_distr::StandardNormal`. Sub-streams are derived
//! with [`mix64`], so a parent seed and a child ordinal fully determine the
//! child stream regardless of evaluation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Stream = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a parent seed with an ordinal: `splitmix64(parent ^ splitmix64(ordinal))`.
///
/// Pure integer arithmetic, identical on every platform.
pub fn mix64(parent: u64, ordinal: u64) -> u64 {
    splitmix64(parent ^ splitmix64(ordinal))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| standard_normal(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mix64_is_order_sensitive_and_stable() {
        assert_eq!(mix64(1, 2), mix64(1, 2));
        assert_ne!(mix64(1, 2), mix64(2, 1));
        assert_ne!(mix64(0, 0), mix64(0, 1));
        // Frozen value guards against accidental changes to the derivation.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn streams_replay() {
        let a = standard_normals(&mut stream(9), 16);
        let b = standard_normals(&mut stream(9), 16);
        assert_eq!(a, b);
    }
}
