//! Seeding helpers shared by every stochastic component.

use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Prng = ChaCha8Rng;

pub fn prng(seed: u64) -> Prng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from `seed` and a list of tags
/// (SplitMix64 finalizer applied per tag).
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    let mut state = seed ^ 0x5851_f42d_4c95_7f2d;
    for &tag in tags {
        state = mix(state.wrapping_add(tag).wrapping_add(0x9e37_79b9_7f4a_7c15));
    }
    mix(state)
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Standard normal draw (Box-Muller).
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

/// Tags used with [`derive`] so that sub-streams never collide.
pub mod tag {
    pub const POOL: u64 = 1;
    pub const SEED_SET: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const CANDIDATE: u64 = 4;
    pub const FINAL: u64 = 5;
    pub const QUERY: u64 = 6;
    pub const MC: u64 = 7;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_separates_tags() {
        assert_ne!(derive(7, &[1]), derive(7, &[2]));
        assert_ne!(derive(7, &[1, 2]), derive(7, &[2, 1]));
        assert_eq!(derive(7, &[3, 4]), derive(7, &[3, 4]));
    }

    #[test]
    fn normal_moments() {
        let mut rng = prng(11);
        let n = 20_000;
        let draws: alloc::vec::Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }
}
