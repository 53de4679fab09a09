//! Seeded, platform-independent random numbers.
//!
//! The generator is ChaCha with 8 rounds (`rand_chacha::ChaCha8Rng`), seeded
//! through `SeedableRng::seed_from_u64`. Uniform reals take the top 53 bits of
//! a `u64` draw: `u = (x >> 11) * 2^-53`, so `u` lies in `[0, 1)`.
//!
//! Parallel work derives child generators with `seed = parent_seed ^ index`.

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child generator for worker `index`, seeded with `seed ^ index`.
    pub fn child(&self, index: u64) -> Self {
        Self::new(self.seed ^ index)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// A uniform draw in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        let v = lo + (hi - lo) * self.next_f64();
        // lo + (hi - lo) * u can round up to hi for u close to 1.
        if v >= hi {
            hi - (hi - lo) * f64::EPSILON
        } else {
            v
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    /// A uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

/// `n` uniform values in `[lo, hi)`.
///
/// # Panics
///
/// Panics unless `lo < hi`.
pub fn rng_uniform(rng: &mut SeededRng, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo < hi, "rng_uniform requires lo < hi, got [{lo}, {hi})");
    (0..n).map(|_| rng.uniform_in(lo, hi)).collect()
}

/// FNV-1a hash of a string, used to key per-arm seeds off names.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a = rng_uniform(&mut SeededRng::new(7), 0.0, 1.0, 5);
        let b = rng_uniform(&mut SeededRng::new(7), 0.0, 1.0, 5);
        assert_eq!(a, b);
        let c = rng_uniform(&mut SeededRng::new(8), 0.0, 1.0, 5);
        assert_ne!(a, c);
    }

    #[test]
    fn values_respect_range() {
        let mut rng = SeededRng::new(1);
        assert!(rng_uniform(&mut rng, 0.0, 1.0, 10_000)
            .iter()
            .all(|&v| (0.0..1.0).contains(&v)));
        assert!(rng_uniform(&mut rng, -3.0, -2.5, 10_000)
            .iter()
            .all(|&v| (-3.0..-2.5).contains(&v)));
    }

    #[test]
    fn mean_of_many_draws_is_one_half() {
        let v = rng_uniform(&mut SeededRng::new(2024), 0.0, 1.0, 100_000);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn golden_stream() {
        // Frozen from the first run; any change here breaks reproducibility
        // of every stored experiment.
        let mut rng = SeededRng::new(42);
        let got: Vec<u64> = (0..16).map(|_| rng.next_u64()).collect();
        assert_eq!(got, GOLDEN_42);
    }

    #[test]
    fn child_seeds_xor_the_index() {
        let parent = SeededRng::new(0b1010);
        assert_eq!(parent.child(0b0110).seed(), 0b1100);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut p = SeededRng::new(3).permutation(100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }

    const GOLDEN_42: [u64; 16] = [
        12578764544318200737,
        17529487244874322312,
        7886285670807131020,
        11572758976476374866,
        5323617429756461744,
        2766252901828231838,
        5682345367224914708,
        14828835203913492612,
        14227028876630821888,
        4401121311800897944,
        9350043436605376040,
        16635332319643196323,
        17653354571726536749,
        10938523927967171405,
        13443959161786668970,
        3304483495961147300,
    ];
}
