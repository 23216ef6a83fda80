//! Seeded sampling from a discrete distribution.
//!
//! The generator is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded through
//! `SeedableRng::seed_from_u64`. A sample consumes two 64-bit outputs: the
//! first picks an alias-table column with Lemire's unbiased multiply-shift
//! reduction, the second (top 53 bits scaled by `2^-53`) flips the column's
//! biased coin. Batches are therefore reproducible across platforms given the
//! seed.

use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::model::{Distribution, PerturbedPair, SampleBatch};

/// The generator behind every seeded draw.
pub type SampleRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SampleRng {
    SampleRng::seed_from_u64(seed)
}

/// Uniform integer in `0..n` (Lemire's nearly divisionless method).
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let range = n as u64;
    let mut product = u128::from(rng.next_u64()) * u128::from(range);
    let mut low = product as u64;
    if low < range {
        let threshold = range.wrapping_neg() % range;
        while low < threshold {
            product = u128::from(rng.next_u64()) * u128::from(range);
            low = product as u64;
        }
    }
    (product >> 64) as usize
}

/// Uniform float in `[0, 1)` with 53 random bits.
pub fn uniform_unit<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Vose alias table: O(n) construction, O(1) per draw.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(dist: &Distribution) -> Self {
        let probs = dist.probs();
        let n = probs.len();
        let mut scaled: Vec<f64> = probs.iter().map(|&p| p * n as f64).collect();
        let mut prob = alloc::vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&l), Some(&g)) = (small.last(), large.last()) {
            small.pop();
            prob[l] = scaled[l];
            alias[l] = g;
            scaled[g] = (scaled[g] + scaled[l]) - 1.0;
            if scaled[g] < 1.0 {
                large.pop();
                small.push(g);
            }
        }
        let heaviest = probs
            .iter()
            .enumerate()
            .fold(0, |best, (i, &p)| if p > probs[best] { i } else { best });
        for i in large.into_iter().chain(small) {
            // Rounding leftovers: keep zero-probability entries unreachable.
            if probs[i] > 0.0 {
                prob[i] = 1.0;
            } else {
                prob[i] = 0.0;
                alias[i] = heaviest;
            }
        }
        AliasTable { prob, alias }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let column = uniform_index(rng, self.prob.len());
        if uniform_unit(rng) < self.prob[column] {
            column
        } else {
            self.alias[column]
        }
    }

    pub fn sample_many<R: RngCore + ?Sized>(&self, rng: &mut R, m: usize) -> Vec<usize> {
        (0..m).map(|_| self.sample(rng)).collect()
    }

    /// `m` draws from a fresh generator seeded with `seed`.
    pub fn draw_batch(&self, m: usize, seed: u64) -> Result<SampleBatch> {
        if m == 0 {
            return Err(Error::Empty("sample batch"));
        }
        let mut rng = rng_from_seed(seed);
        SampleBatch::new(self.sample_many(&mut rng, m), seed)
    }
}

/// `m` i.i.d. indices from the pair's true distribution.
pub fn draw_samples(pair: &PerturbedPair, m: usize, seed: u64) -> Result<SampleBatch> {
    AliasTable::new(pair.true_dist()).draw_batch(m, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_perturbed;

    #[test]
    fn point_mass_always_hits() {
        let q = Distribution::point_mass(5, 2).unwrap();
        let pair = PerturbedPair::from_distributions(Distribution::uniform(5).unwrap(), q.clone(), 0.0);
        // a point mass is not close to uniform, so sample the table directly
        assert!(pair.is_err());
        let batch = AliasTable::new(&q).draw_batch(5, 7).unwrap();
        assert_eq!(batch.indices(), &[2, 2, 2, 2, 2]);
    }

    #[test]
    fn same_seed_same_batch() {
        let p = Distribution::uniform(4).unwrap();
        let pair = make_perturbed(&p, &[0.2, -0.2, 0.1, -0.1], 0.2).unwrap();
        let a = draw_samples(&pair, 1000, 42).unwrap();
        let b = draw_samples(&pair, 1000, 42).unwrap();
        let c = draw_samples(&pair, 1000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.seed(), 42);
    }

    #[test]
    fn zero_m_rejected() {
        let p = Distribution::uniform(4).unwrap();
        let pair = make_perturbed(&p, &[0.0; 4], 0.0).unwrap();
        assert!(draw_samples(&pair, 0, 1).is_err());
    }

    #[test]
    fn zero_entries_never_drawn() {
        let q = Distribution::new(vec![0.0, 0.3, 0.0, 0.7, 0.0]).unwrap();
        let t = AliasTable::new(&q);
        let mut rng = rng_from_seed(1);
        for _ in 0..20_000 {
            let i = t.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn uniform_index_in_range() {
        let mut rng = rng_from_seed(9);
        for n in [1usize, 2, 3, 7, 1000, usize::MAX / 3] {
            for _ in 0..100 {
                assert!(uniform_index(&mut rng, n) < n);
            }
        }
    }

    #[test]
    fn large_uniform_frequencies_within_five_sd() {
        let n = 10_000;
        let m = 1_000_000;
        let q = Distribution::uniform(n).unwrap();
        let batch = AliasTable::new(&q).draw_batch(m, 2024).unwrap();
        let mut counts = vec![0u32; n];
        for &i in batch.indices() {
            counts[i] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = m as f64 * p;
        let sd = (m as f64 * p * (1.0 - p)).sqrt();
        // Union bound over 1e4 cells at 5 sd: failure probability ~ 6e-3.
        let worst = counts.iter().map(|&c| (c as f64 - mean).abs()).fold(0.0, f64::max);
        assert!(worst <= 5.0 * sd, "worst deviation {worst} vs 5 sd = {}", 5.0 * sd);
    }

    #[test]
    fn empirical_linf_converges_over_seeds() {
        let n = 100;
        let m = 100_000;
        let w: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        let total: f64 = w.iter().sum();
        let q = Distribution::new(w.iter().map(|x| x / total).collect()).unwrap();
        let table = AliasTable::new(&q);
        let radius = 5.0 * ((n as f64).ln() / m as f64).sqrt();
        let mut within = 0;
        for seed in 0..100u64 {
            let batch = table.draw_batch(m, seed).unwrap();
            let mut counts = vec![0usize; n];
            for &i in batch.indices() {
                counts[i] += 1;
            }
            let linf = counts
                .iter()
                .zip(q.probs())
                .map(|(&c, &p)| (c as f64 / m as f64 - p).abs())
                .fold(0.0, f64::max);
            if linf < radius {
                within += 1;
            }
        }
        assert!(within >= 99, "{within}/100 seeds within radius");
    }
}
