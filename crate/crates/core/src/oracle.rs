//! Exact moments by enumerating every ordered sample sequence.
//!
//! With `N` indices and `m` samples there are `N^m` sequences. Each is
//! visited once by an odometer over sample positions; its probability is the
//! product of `Q` over the positions and its estimator value is read off the
//! count vector. The per-index contributions are tabulated up front from
//! exact integer binomials, independently of the estimator module, so the two
//! can be checked against each other.
//!
//! Enumeration is split by the index drawn first, so callers may evaluate the
//! `N` partitions in parallel and merge them in index order.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{binom_u128, powi, sign_pow, CompensatedSum};
use crate::model::{PerturbedPair, Population};
use crate::MAX_ORDER;

/// Default cap on the number of enumerated sequences.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMoments {
    pub expectation: f64,
    /// Clamped at zero.
    pub variance: f64,
    pub outcome_count: u128,
    /// Total probability visited; one up to rounding.
    pub total_prob: f64,
}

/// Sum of `weight * f(value)` over one partition, with the visited mass.
#[derive(Debug, Clone, Copy, Default)]
pub struct PartialSum {
    pub weighted: CompensatedSum,
    pub mass: CompensatedSum,
}

impl PartialSum {
    pub fn merge(&mut self, other: &PartialSum) {
        self.weighted.merge(&other.weighted);
        self.mass.merge(&other.mass);
    }
}

/// A statistic of the form `offset + sum_i table[i][Y_i]`.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    q: Vec<f64>,
    m: usize,
    offset: f64,
    table: Vec<Vec<f64>>,
}

fn ratio_term(y: usize, m: usize, h: usize) -> Result<f64> {
    let num = binom_u128(y as u64, h as u64).ok_or_else(|| invalid!("binomial overflow"))?;
    let den = binom_u128(m as u64, h as u64).ok_or_else(|| invalid!("binomial overflow"))?;
    Ok(num as f64 / den as f64)
}

fn centered(pop: &Population, pair: &PerturbedPair, w: f64) -> Result<Vec<f64>> {
    if pop.len() != pair.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: pair.len() });
    }
    pair.nominal().require_positive()?;
    Ok(pop.values().iter().zip(pair.nominal().probs()).map(|(x, p)| x - p * w).collect())
}

impl OutcomeTable {
    /// The order-`k` estimator with pilot value `w` from `m` samples.
    pub fn estimator(pop: &Population, pair: &PerturbedPair, k: usize, m: usize, w: f64) -> Result<Self> {
        if k == 0 || k > MAX_ORDER || k > m {
            return Err(invalid!("order k = {k} must lie in 1..=min({MAX_ORDER}, m = {m})"));
        }
        let xbar = centered(pop, pair, w)?;
        let p = pair.nominal().probs();
        let mut table = Vec::with_capacity(xbar.len());
        for (i, &xb) in xbar.iter().enumerate() {
            let mut row = vec![0.0; m + 1];
            for (y, slot) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for h in 1..=k.min(y) {
                    let coeff = sign_pow(h + 1) * binom_u128(k as u64, h as u64).unwrap_or(0) as f64;
                    acc += coeff * ratio_term(y, m, h)? * xb / powi(p[i], h as u32);
                }
                *slot = acc;
            }
            table.push(row);
        }
        Ok(OutcomeTable { q: pair.true_dist().probs().to_vec(), m, offset: w, table })
    }

    /// The single collision term `xi_h` from `m` samples.
    pub fn xi(pop: &Population, pair: &PerturbedPair, h: usize, m: usize, w: f64) -> Result<Self> {
        if h == 0 || h > m {
            return Err(invalid!("collision order h = {h} must lie in 1..={m}"));
        }
        let xbar = centered(pop, pair, w)?;
        let p = pair.nominal().probs();
        let mut table = Vec::with_capacity(xbar.len());
        for (i, &xb) in xbar.iter().enumerate() {
            let mut row = vec![0.0; m + 1];
            for (y, slot) in row.iter_mut().enumerate().skip(h) {
                *slot = ratio_term(y, m, h)? * xb / powi(p[i], h as u32);
            }
            table.push(row);
        }
        Ok(OutcomeTable { q: pair.true_dist().probs().to_vec(), m, offset: 0.0, table })
    }

    pub fn n(&self) -> usize {
        self.q.len()
    }

    /// `N^m`, or an error when it exceeds `budget`.
    pub fn outcome_count(&self, budget: u128) -> Result<u128> {
        let mut total: u128 = 1;
        for _ in 0..self.m {
            total = match total.checked_mul(self.q.len() as u128) {
                Some(t) if t <= budget => t,
                _ => return Err(Error::BudgetExceeded { outcomes: saturating_pow(self.q.len(), self.m), budget }),
            };
        }
        Ok(total)
    }

    fn value(&self, counts: &[usize]) -> f64 {
        let mut s = CompensatedSum::new();
        s.add(self.offset);
        for (row, &y) in self.table.iter().zip(counts) {
            s.add(row[y]);
        }
        s.value()
    }

    /// Accumulates `Q(seq) * f(value(seq))` over the sequences whose first
    /// sample is `lead`.
    pub fn partial<F: Fn(f64) -> f64>(&self, lead: usize, f: F) -> PartialSum {
        let n = self.q.len();
        let m = self.m;
        let mut out = PartialSum::default();
        let mut seq = vec![0usize; m];
        seq[0] = lead;
        let mut counts = vec![0usize; n];
        counts[lead] += 1;
        counts[0] += m - 1;
        // prefix[j] = product of q over positions < j
        let mut prefix = vec![1.0; m + 1];
        for j in 0..m {
            prefix[j + 1] = prefix[j] * self.q[seq[j]];
        }
        loop {
            let weight = prefix[m];
            if weight != 0.0 {
                out.weighted.add(weight * f(self.value(&counts)));
                out.mass.add(weight);
            }
            // advance positions 1..m; position 0 stays at `lead`
            let mut j = m;
            loop {
                j -= 1;
                if j == 0 {
                    return out;
                }
                counts[seq[j]] -= 1;
                if seq[j] + 1 < n {
                    seq[j] += 1;
                    counts[seq[j]] += 1;
                    break;
                }
                seq[j] = 0;
                counts[0] += 1;
            }
            for l in j..m {
                prefix[l + 1] = prefix[l] * self.q[seq[l]];
            }
        }
    }

    /// Expectation and variance, visiting every partition in order.
    pub fn moments(&self, budget: u128) -> Result<ExactMoments> {
        let outcome_count = self.outcome_count(budget)?;
        let mut first = PartialSum::default();
        for lead in 0..self.n() {
            first.merge(&self.partial(lead, |v| v));
        }
        let expectation = first.weighted.value() / first.mass.value();
        let mut second = PartialSum::default();
        for lead in 0..self.n() {
            second.merge(&self.partial(lead, |v| (v - expectation) * (v - expectation)));
        }
        Ok(ExactMoments {
            expectation,
            variance: (second.weighted.value() / second.mass.value()).max(0.0),
            outcome_count,
            total_prob: first.mass.value(),
        })
    }
}

fn saturating_pow(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// Exact mean and variance of the order-`k` estimator from `m` samples.
pub fn exact_estimator_moments(
    pop: &Population,
    pair: &PerturbedPair,
    k: usize,
    m: usize,
    w: f64,
    budget: u128,
) -> Result<ExactMoments> {
    OutcomeTable::estimator(pop, pair, k, m, w)?.moments(budget)
}

/// Exact mean and variance of `xi_h` from `m` samples.
pub fn exact_xi_moments(
    pop: &Population,
    pair: &PerturbedPair,
    h: usize,
    m: usize,
    w: f64,
    budget: u128,
) -> Result<ExactMoments> {
    OutcomeTable::xi(pop, pair, h, m, w)?.moments(budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_perturbed, Distribution};

    fn uniform_pair(n: usize) -> PerturbedPair {
        make_perturbed(&Distribution::uniform(n).unwrap(), &vec![0.0; n], 0.0).unwrap()
    }

    #[test]
    fn two_sample_variance_half() {
        let pop = Population::new(vec![1.0, 0.0]).unwrap();
        let r = exact_estimator_moments(&pop, &uniform_pair(2), 1, 2, 0.0, DEFAULT_BUDGET).unwrap();
        assert_eq!(r.outcome_count, 4);
        assert!((r.expectation - 1.0).abs() < 1e-15);
        assert!((r.variance - 0.5).abs() < 1e-15);
        assert!((r.total_prob - 1.0).abs() < 1e-15);
        // outcomes (2,0), (1,1), (0,2) give 0, 2, 0
        let r2 = exact_estimator_moments(&pop, &uniform_pair(2), 2, 2, 0.0, DEFAULT_BUDGET).unwrap();
        assert!((r2.expectation - 1.0).abs() < 1e-15);
        assert!((r2.variance - 1.0).abs() < 1e-15);
    }

    #[test]
    fn perturbed_first_order_expectation() {
        let p = Distribution::uniform(2).unwrap();
        let pair = make_perturbed(&p, &[0.5, -0.5], 0.5).unwrap();
        let pop = Population::new(vec![1.0, 0.0]).unwrap();
        let r = exact_estimator_moments(&pop, &pair, 1, 1, 0.0, DEFAULT_BUDGET).unwrap();
        assert!((r.expectation - 1.5).abs() < 1e-15);
        let r2 = exact_estimator_moments(&pop, &pair, 2, 2, 0.0, DEFAULT_BUDGET).unwrap();
        assert!((r2.expectation - 0.75).abs() < 1e-15);
    }

    #[test]
    fn xi_second_moment() {
        let p = Distribution::uniform(2).unwrap();
        let pair = make_perturbed(&p, &[0.5, -0.5], 0.5).unwrap();
        let pop = Population::new(vec![1.0, 0.0]).unwrap();
        let r = exact_xi_moments(&pop, &pair, 2, 2, 0.0, DEFAULT_BUDGET).unwrap();
        assert!((r.expectation - 2.25).abs() < 1e-15);
    }

    #[test]
    fn point_mass_has_no_variance() {
        // a point mass is not close to uniform, so build the table directly
        let table = OutcomeTable {
            q: vec![0.0, 1.0, 0.0],
            m: 3,
            offset: 0.0,
            table: vec![vec![1.0; 4], vec![0.0, 1.0, 2.0, 3.0], vec![7.0; 4]],
        };
        let r = table.moments(DEFAULT_BUDGET).unwrap();
        assert!((r.expectation - 11.0).abs() < 1e-15);
        assert_eq!(r.variance, 0.0);
    }

    #[test]
    fn partitions_sum_to_whole() {
        let p = Distribution::uniform(3).unwrap();
        let pair = make_perturbed(&p, &[0.2, -0.1, -0.1], 0.2).unwrap();
        let pop = Population::new(vec![1.0, -2.0, 4.0]).unwrap();
        let table = OutcomeTable::estimator(&pop, &pair, 2, 4, 1.0).unwrap();
        let mut mass = 0.0;
        for lead in 0..3 {
            let part = table.partial(lead, |v| v);
            let want = pair.true_dist().probs()[lead];
            assert!((part.mass.value() - want).abs() < 1e-15);
            mass += part.mass.value();
        }
        assert!((mass - 1.0).abs() < 1e-15);
        assert_eq!(table.outcome_count(DEFAULT_BUDGET).unwrap(), 81);
    }

    #[test]
    fn budget_enforced() {
        let pop = Population::new(vec![1.0; 10]).unwrap();
        let r = exact_estimator_moments(&pop, &uniform_pair(10), 1, 8, 0.0, DEFAULT_BUDGET);
        assert!(matches!(r, Err(Error::BudgetExceeded { outcomes: 100_000_000, .. })));
        assert!(exact_estimator_moments(&pop, &uniform_pair(10), 3, 2, 0.0, DEFAULT_BUDGET).is_err());
    }

    #[test]
    fn single_sample_is_hansen_hurwitz() {
        let p = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let pair = make_perturbed(&p, &[0.0; 3], 0.0).unwrap();
        let pop = Population::new(vec![3.0, 1.0, -2.0]).unwrap();
        let r = exact_estimator_moments(&pop, &pair, 1, 1, 0.0, DEFAULT_BUDGET).unwrap();
        assert!((r.expectation - 2.0).abs() < 1e-15);
        let want_var = 0.5 * 36.0 + 0.25 * 16.0 + 0.25 * 64.0 - 4.0;
        assert!((r.variance - want_var).abs() < 1e-12);
    }
}
