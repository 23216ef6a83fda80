//! Populations, probability vectors and pointwise-close perturbations.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{abs, CompensatedSum};
use crate::PROB_TOL;

/// The multiset of values `x_1..x_N` whose sum is being estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    values: Vec<f64>,
}

impl Population {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("population"));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Population { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `mu = sum x_i`.
    pub fn sum(&self) -> f64 {
        self.values.iter().copied().collect::<CompensatedSum>().value()
    }

    /// `mu_+ = sum |x_i|`.
    pub fn abs_sum(&self) -> f64 {
        self.values.iter().map(|&x| abs(x)).collect::<CompensatedSum>().value()
    }

    /// Values recentred around a pilot estimate: `x_i - P(i) * w`.
    pub fn centered(&self, nominal: &Distribution, w: f64) -> Vec<f64> {
        self.values
            .iter()
            .zip(nominal.probs())
            .map(|(&x, &p)| x - p * w)
            .collect()
    }
}

/// A probability vector over `0..N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates entries in `[0, 1]` summing to one within [`PROB_TOL`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, PROB_TOL)
    }

    pub(crate) fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("distribution"));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::NotADistribution(format!("entry {i} = {p} outside [0, 1]")));
            }
        }
        let total = probs.iter().copied().collect::<CompensatedSum>().value();
        if abs(total - 1.0) > tol {
            return Err(Error::NotADistribution(format!("entries sum to {total}")));
        }
        Ok(Distribution { probs })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("distribution"));
        }
        Ok(Distribution { probs: alloc::vec![1.0 / n as f64; n] })
    }

    pub fn point_mass(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, size: n });
        }
        let mut probs = alloc::vec![0.0; n];
        probs[index] = 1.0;
        Ok(Distribution { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Errors on the first zero entry.
    pub fn require_positive(&self) -> Result<()> {
        match self.probs.iter().position(|&p| p <= 0.0) {
            Some(index) => Err(Error::ZeroProbability { index }),
            None => Ok(()),
        }
    }

    /// `max_i 1 / P(i)`; requires every entry positive.
    pub fn n_tilde(&self) -> Result<f64> {
        self.require_positive()?;
        let min = self.probs.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(1.0 / min)
    }
}

/// A nominal distribution `P`, the true sampling distribution
/// `Q(i) = (1 + gamma_i) P(i)`, and the closeness bound `gamma >= |gamma_i|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedPair {
    nominal: Distribution,
    true_dist: Distribution,
    deviations: Vec<f64>,
    gamma_bound: f64,
}

impl PerturbedPair {
    /// Builds a pair from an explicit true distribution, deriving the
    /// deviations `gamma_i = Q(i) / P(i) - 1`.
    pub fn from_distributions(nominal: Distribution, true_dist: Distribution, gamma: f64) -> Result<Self> {
        if nominal.len() != true_dist.len() {
            return Err(Error::DimensionMismatch { expected: nominal.len(), got: true_dist.len() });
        }
        nominal.require_positive()?;
        check_gamma(gamma)?;
        let deviations: Vec<f64> =
            nominal.probs().iter().zip(true_dist.probs()).map(|(&p, &q)| q / p - 1.0).collect();
        for (index, (&p, &q)) in nominal.probs().iter().zip(true_dist.probs()).enumerate() {
            if q > (1.0 + gamma) * p || q < (1.0 - gamma) * p {
                return Err(Error::DeviationOutOfBounds { index, value: deviations[index], bound: gamma });
            }
        }
        Ok(PerturbedPair { nominal, true_dist, deviations, gamma_bound: gamma })
    }

    pub fn nominal(&self) -> &Distribution {
        &self.nominal
    }

    pub fn true_dist(&self) -> &Distribution {
        &self.true_dist
    }

    pub fn deviations(&self) -> &[f64] {
        &self.deviations
    }

    pub fn gamma(&self) -> f64 {
        self.gamma_bound
    }

    pub fn len(&self) -> usize {
        self.nominal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nominal.is_empty()
    }

    /// `(1 - gamma) P(i) <= Q(i) <= (1 + gamma) P(i)` for every index.
    pub fn is_pointwise_close(&self) -> bool {
        let g = self.gamma_bound;
        self.nominal
            .probs()
            .iter()
            .zip(self.true_dist.probs())
            .all(|(&p, &q)| q <= (1.0 + g) * p && q >= (1.0 - g) * p)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid!("gamma must lie in [0, 1), got {gamma}"));
    }
    Ok(())
}

/// A batch of sampled indices `X_1..X_m` (0-based) and the seed that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBatch {
    indices: Vec<usize>,
    seed: u64,
}

impl SampleBatch {
    pub fn new(indices: Vec<usize>, seed: u64) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Empty("sample batch"));
        }
        Ok(SampleBatch { indices, seed })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= n) {
            Some(&index) => Err(Error::IndexOutOfRange { index, size: n }),
            None => Ok(()),
        }
    }
}

/// Summary scalars of a population under a nominal distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub mu: f64,
    pub mu_plus: f64,
    /// Single-sample Hansen-Hurwitz variance `sum_i P(i) (x_i / P(i) - mu)^2`.
    pub var_hh: f64,
    pub n_tilde: f64,
}

pub fn population_stats(pop: &Population, nominal: &Distribution) -> Result<PopulationStats> {
    if pop.len() != nominal.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: nominal.len() });
    }
    let n_tilde = nominal.n_tilde()?;
    let mu = pop.sum();
    let var_hh = pop
        .values()
        .iter()
        .zip(nominal.probs())
        .map(|(&x, &p)| {
            let d = x / p - mu;
            p * d * d
        })
        .collect::<CompensatedSum>()
        .value();
    Ok(PopulationStats { mu, mu_plus: pop.abs_sum(), var_hh, n_tilde })
}

/// Pairs `P` with `Q(i) = (1 + gamma_i) P(i)`.
pub fn make_perturbed(nominal: &Distribution, deviations: &[f64], gamma: f64) -> Result<PerturbedPair> {
    if deviations.len() != nominal.len() {
        return Err(Error::DimensionMismatch { expected: nominal.len(), got: deviations.len() });
    }
    check_gamma(gamma)?;
    nominal.require_positive()?;
    for (index, &value) in deviations.iter().enumerate() {
        if !value.is_finite() || abs(value) > gamma {
            return Err(Error::DeviationOutOfBounds { index, value, bound: gamma });
        }
    }
    let balance = deviations
        .iter()
        .zip(nominal.probs())
        .map(|(&g, &p)| g * p)
        .collect::<CompensatedSum>()
        .value();
    if abs(balance) > PROB_TOL {
        return Err(Error::Unbalanced(balance));
    }
    let q: Vec<f64> = deviations.iter().zip(nominal.probs()).map(|(&g, &p)| (1.0 + g) * p).collect();
    // The nominal sum and the balance each contribute up to PROB_TOL.
    let true_dist = Distribution::with_tolerance(q, 2.0 * PROB_TOL)?;
    Ok(PerturbedPair {
        nominal: nominal.clone(),
        true_dist,
        deviations: deviations.to_vec(),
        gamma_bound: gamma,
    })
}

/// The extremal perturbation `gamma_i = +gamma` on `split`, `-gamma` elsewhere.
///
/// `split` must carry exactly half of the nominal mass.
pub fn worst_case_pair(nominal: &Distribution, gamma: f64, split: &[usize]) -> Result<PerturbedPair> {
    let n = nominal.len();
    let mut in_split = alloc::vec![false; n];
    for &i in split {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, size: n });
        }
        in_split[i] = true;
    }
    let mut inside = CompensatedSum::new();
    let mut outside = CompensatedSum::new();
    for (&p, &s) in nominal.probs().iter().zip(&in_split) {
        if s {
            inside.add(p);
        } else {
            outside.add(p);
        }
    }
    let diff = inside.value() - outside.value();
    if abs(diff) > PROB_TOL {
        return Err(Error::Unbalanced(diff * gamma));
    }
    let deviations: Vec<f64> = in_split.iter().map(|&s| if s { gamma } else { -gamma }).collect();
    make_perturbed(nominal, &deviations, gamma)
}
