//! Seeded, counter-based random number generation.
//!
//! Every stochastic operation in this crate threads an explicit [`Rng`];
//! there is no global generator. The stream is ChaCha8, which is counter
//! based: equal seeds give equal streams, and cloning an `Rng` forks the
//! exact stream state (used by tests that must replay draws).

use ndarray::{Array1, Array2};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic random source with value semantics.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            stream: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed this generator was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent generator keyed by `label`.
    ///
    /// The child stream depends only on `(seed, label)`, never on how much
    /// of the parent stream has been consumed, so sub-experiments stay
    /// reproducible when unrelated draws are added upstream.
    pub fn fork(&self, label: u64) -> Rng {
        // splitmix64-style mix of seed and label
        let mut x = self.seed ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        Rng::new(x ^ (x >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.stream.next_u64()
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.stream.gen_range(lo..hi)
    }

    /// Uniform integer in `[0, n)`.
    pub fn index(&mut self, n: usize) -> usize {
        self.stream.gen_range(0..n)
    }

    /// Standard normal draw.
    pub fn standard_normal(&mut self) -> f64 {
        self.stream.sample(StandardNormal)
    }

    /// `n` standard normal draws.
    pub fn normal_vec(&mut self, n: usize) -> Array1<f64> {
        Array1::from_iter((0..n).map(|_| self.standard_normal()))
    }

    /// `rows x cols` matrix of `N(0, std^2)` draws, filled row-major.
    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Array2<f64> {
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| self.standard_normal() * std)
            .collect();
        Array2::from_shape_vec((rows, cols), data).expect("shape matches data length")
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.stream.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}
