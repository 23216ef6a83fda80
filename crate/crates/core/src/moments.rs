//! Nearly uniform distributions with matching low frequency moments.
//!
//! For order `k`, closeness `gamma` and scale `n0`, level `i = 0..=k` holds
//! a `C(k, i) / 2^(k-1)` share of the mass spread over points of probability
//! `(1 + gamma i / k) / n0`. Even levels form `D1`, odd levels form `D2`.
//! Because `sum_i (-1)^i C(k, i) P(i) = 0` for every polynomial of degree
//! below `k`, the frequency moments `1..=k` of the two distributions agree,
//! while their support sizes differ by
//!
//! ```text
//! (n0 / 2^(k-1)) (k! / k^k) gamma^k / prod_{i=1..k} (1 + i gamma / k)
//! ```
//!
//! Everything here is exact rational arithmetic. Spectra are stored by level;
//! expansion to individual points only happens when building sampling
//! instances.

use alloc::vec::Vec;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::CompensatedSum;
use crate::model::{Distribution, PerturbedPair, Population};
use crate::sampler::{rng_from_seed, uniform_index};
use crate::MAX_ORDER;

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn binom_big(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for j in 0..k {
        acc = acc * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    acc
}

fn pow(base: &BigRational, e: usize) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..e {
        acc *= base;
    }
    acc
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// One level of a spectrum: `count` points each of probability `prob`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub i: usize,
    pub prob: BigRational,
    pub count: BigRational,
}

/// A distribution described by its distinct probability values and their
/// (possibly fractional) multiplicities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MassSpectrum {
    pub n0: u64,
    pub levels: Vec<Level>,
}

impl MassSpectrum {
    /// `sum count * prob^ell`.
    pub fn frequency_moment(&self, ell: usize) -> BigRational {
        self.levels.iter().fold(BigRational::zero(), |acc, l| acc + &l.count * pow(&l.prob, ell))
    }

    pub fn support_size(&self) -> BigRational {
        self.levels.iter().fold(BigRational::zero(), |acc, l| acc + &l.count)
    }

    pub fn total_mass(&self) -> BigRational {
        self.frequency_moment(1)
    }
}

pub fn frequency_moment(spec: &MassSpectrum, ell: usize) -> Result<BigRational> {
    if ell == 0 {
        return Err(invalid!("moment order must be positive"));
    }
    Ok(spec.frequency_moment(ell))
}

/// The pair `D1` (even levels) / `D2` (odd levels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentMatchedPair {
    pub d1: MassSpectrum,
    pub d2: MassSpectrum,
    pub k: usize,
    pub gamma: BigRational,
    pub n1: BigRational,
    pub n2: BigRational,
    pub gap: BigRational,
}

/// Outcome of checking a pair against its defining properties.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCheck {
    /// Moments `1..=k` agree exactly.
    pub moments_match: bool,
    /// Moment `k + 1` differs.
    pub next_moment_differs: bool,
    /// Both spectra carry total mass exactly one.
    pub unit_mass: bool,
    /// Every probability lies in `[1/n0, (1+gamma)/n0]`.
    pub probs_in_band: bool,
    /// Every probability lies in `[(1-gamma)/n2, (1+gamma)/n2]`.
    pub close_to_uniform: bool,
    /// `n1, n2` lie in `[n0/(1+gamma), n0]`.
    pub supports_in_range: bool,
    /// `n1 - n2` equals the closed form.
    pub gap_matches: bool,
}

impl PairCheck {
    pub fn all(&self) -> bool {
        self.moments_match
            && self.next_moment_differs
            && self.unit_mass
            && self.probs_in_band
            && self.close_to_uniform
            && self.supports_in_range
            && self.gap_matches
    }
}

impl MomentMatchedPair {
    pub fn check(&self) -> PairCheck {
        let one = BigRational::one();
        let n0 = int(self.d1.n0);
        let lo = &one / &n0;
        let hi = (&one + &self.gamma) / &n0;
        let spectra = [&self.d1, &self.d2];
        let probs_in_band =
            spectra.iter().flat_map(|s| &s.levels).all(|l| l.prob >= lo && l.prob <= hi);
        let close_lo = (&one - &self.gamma) / &self.n2;
        let close_hi = (&one + &self.gamma) / &self.n2;
        let close_to_uniform =
            spectra.iter().flat_map(|s| &s.levels).all(|l| l.prob >= close_lo && l.prob <= close_hi);
        let min_support = &n0 / (&one + &self.gamma);
        let supports_in_range = [&self.n1, &self.n2].iter().all(|n| **n >= min_support && **n <= n0);
        let closed = support_gap_closed_form(self.k, &self.gamma, self.d1.n0).ok();
        PairCheck {
            moments_match: (1..=self.k)
                .all(|ell| self.d1.frequency_moment(ell) == self.d2.frequency_moment(ell)),
            next_moment_differs: self.d1.frequency_moment(self.k + 1)
                != self.d2.frequency_moment(self.k + 1),
            unit_mass: self.d1.total_mass().is_one() && self.d2.total_mass().is_one(),
            probs_in_band,
            close_to_uniform,
            supports_in_range,
            gap_matches: closed.as_ref() == Some(&self.gap),
        }
    }
}

/// `sum_{i=0..=k} (-1)^i C(k, i) / (a + gamma i)`, exactly.
pub fn alternating_binomial_sum(k: usize, a: &BigRational, gamma: &BigRational) -> Result<BigRational> {
    check_small_order(k)?;
    let mut acc = BigRational::zero();
    for i in 0..=k {
        let denom = a + gamma * int(i as u64);
        if denom.is_zero() {
            return Err(Error::Pole(i));
        }
        let term = BigRational::from_integer(binom_big(k, i)) / denom;
        if i % 2 == 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    Ok(acc)
}

/// `k! gamma^k / (a (a + gamma) ... (a + k gamma))`.
pub fn alternating_binomial_closed_form(k: usize, a: &BigRational, gamma: &BigRational) -> Result<BigRational> {
    check_small_order(k)?;
    let mut denom = BigRational::one();
    for i in 0..=k {
        let factor = a + gamma * int(i as u64);
        if factor.is_zero() {
            return Err(Error::Pole(i));
        }
        denom *= factor;
    }
    let factorial = (1..=k as u64).fold(BigInt::one(), |acc, j| acc * BigInt::from(j));
    Ok(BigRational::from_integer(factorial) * pow(gamma, k) / denom)
}

fn check_small_order(k: usize) -> Result<()> {
    if k == 0 || k > MAX_ORDER {
        return Err(invalid!("k = {k} must lie in 1..={MAX_ORDER}"));
    }
    Ok(())
}

fn check_construction(k: usize, gamma: &BigRational, n0: u64) -> Result<()> {
    check_small_order(k)?;
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    if !gamma.is_positive() || *gamma > half {
        return Err(invalid!("gamma must lie in (0, 1/2], got {gamma}"));
    }
    if n0 == 0 {
        return Err(invalid!("n0 must be positive"));
    }
    Ok(())
}

/// Support-size difference `n1 - n2` in closed form.
pub fn support_gap_closed_form(k: usize, gamma: &BigRational, n0: u64) -> Result<BigRational> {
    check_construction(k, gamma, n0)?;
    let kk = int(k as u64);
    let factorial = (1..=k as u64).fold(BigInt::one(), |acc, j| acc * BigInt::from(j));
    let mut denom = BigRational::one();
    for i in 1..=k {
        denom *= BigRational::one() + gamma * int(i as u64) / &kk;
    }
    let two_pow = BigRational::from_integer(BigInt::from(2).pow((k - 1) as u32));
    Ok(int(n0) / two_pow * BigRational::from_integer(factorial) / pow(&kk, k) * pow(gamma, k) / denom)
}

/// Builds `D1` and `D2` exactly.
pub fn construct_pair(k: usize, gamma: &BigRational, n0: u64) -> Result<MomentMatchedPair> {
    check_construction(k, gamma, n0)?;
    let n0r = int(n0);
    let kk = int(k as u64);
    let two_pow = BigRational::from_integer(BigInt::from(2).pow((k - 1) as u32));
    let mut d1 = MassSpectrum { n0, levels: Vec::new() };
    let mut d2 = MassSpectrum { n0, levels: Vec::new() };
    for i in 0..=k {
        let scale = BigRational::one() + gamma * int(i as u64) / &kk;
        let share = BigRational::from_integer(binom_big(k, i)) / &two_pow;
        let level = Level { i, prob: &scale / &n0r, count: &n0r * share / &scale };
        if i % 2 == 0 {
            d1.levels.push(level);
        } else {
            d2.levels.push(level);
        }
    }
    let n1 = d1.support_size();
    let n2 = d2.support_size();
    let gap = &n1 - &n2;
    Ok(MomentMatchedPair { d1, d2, k, gamma: gamma.clone(), n1, n2, gap })
}

/// How fractional level counts become integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundingMode {
    /// Round to nearest; the lowest level absorbs the leftover mass and the
    /// probabilities are rescaled to total one.
    Nearest,
    /// Fail unless every count is already an integer.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizedLevel {
    pub i: usize,
    pub prob: BigRational,
    pub count: u64,
}

/// A spectrum with integer multiplicities, summing to mass one exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RealizedSpectrum {
    pub n0: u64,
    pub levels: Vec<RealizedLevel>,
}

impl RealizedSpectrum {
    pub fn support_size(&self) -> u64 {
        self.levels.iter().map(|l| l.count).sum()
    }

    pub fn frequency_moment(&self, ell: usize) -> BigRational {
        self.levels
            .iter()
            .fold(BigRational::zero(), |acc, l| acc + int(l.count) * pow(&l.prob, ell))
    }

    /// Point probabilities in level order.
    fn expand(&self) -> Vec<BigRational> {
        let mut out = Vec::with_capacity(self.support_size() as usize);
        for l in &self.levels {
            for _ in 0..l.count {
                out.push(l.prob.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedPair {
    pub d1: RealizedSpectrum,
    pub d2: RealizedSpectrum,
    pub k: usize,
    pub gamma: BigRational,
    /// `max_{ell <= k} |F_ell(D1) - F_ell(D2)| / max(F_ell(D1), F_ell(D2))`.
    pub moment_error: f64,
}

impl RealizedPair {
    pub fn n1(&self) -> u64 {
        self.d1.support_size()
    }

    pub fn n2(&self) -> u64 {
        self.d2.support_size()
    }

    pub fn gap(&self) -> i64 {
        self.n1() as i64 - self.n2() as i64
    }
}

fn realize(spec: &MassSpectrum, mode: RoundingMode) -> Result<RealizedSpectrum> {
    let mut counts: Vec<BigInt> = Vec::with_capacity(spec.levels.len());
    for (pos, l) in spec.levels.iter().enumerate() {
        match mode {
            RoundingMode::Exact => {
                if !l.count.is_integer() {
                    return Err(invalid!("level {} count {} is not an integer", l.i, l.count));
                }
                counts.push(l.count.to_integer());
            }
            RoundingMode::Nearest if pos == 0 => counts.push(BigInt::zero()),
            RoundingMode::Nearest => counts.push(l.count.round().to_integer()),
        }
    }
    if mode == RoundingMode::Nearest {
        let low = &spec.levels[0];
        let rest = spec.levels[1..]
            .iter()
            .zip(&counts[1..])
            .fold(BigRational::zero(), |acc, (l, c)| acc + &l.prob * BigRational::from_integer(c.clone()));
        counts[0] = ((BigRational::one() - rest) / &low.prob).round().to_integer();
    }
    let mut levels = Vec::with_capacity(counts.len());
    for (l, c) in spec.levels.iter().zip(&counts) {
        let count = c.to_u64().filter(|&c| c > 0).ok_or(Error::EmptyLevel { level: l.i })?;
        levels.push(RealizedLevel { i: l.i, prob: l.prob.clone(), count });
    }
    let mass = levels.iter().fold(BigRational::zero(), |acc, l| acc + &l.prob * int(l.count));
    if !mass.is_one() {
        for l in &mut levels {
            l.prob = &l.prob / &mass;
        }
    }
    Ok(RealizedSpectrum { n0: spec.n0, levels })
}

/// Turns the fractional level counts into integers so the spectra can be
/// sampled, reporting how far the realized moments drift apart.
pub fn realize_integer_counts(pair: &MomentMatchedPair, mode: RoundingMode) -> Result<RealizedPair> {
    let d1 = realize(&pair.d1, mode)?;
    let d2 = realize(&pair.d2, mode)?;
    let mut moment_error = 0.0f64;
    for ell in 1..=pair.k {
        let a = d1.frequency_moment(ell);
        let b = d2.frequency_moment(ell);
        let scale = if a > b { a.clone() } else { b.clone() };
        let rel = to_f64(&((a - b).abs() / scale));
        moment_error = moment_error.max(rel);
    }
    Ok(RealizedPair { d1, d2, k: pair.k, gamma: pair.gamma.clone(), moment_error })
}

/// Which spectrum sits on the one-valued indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    /// Ones follow `D1` (sum `n1`), zeros follow `D2`.
    O1,
    /// Ones follow `D2` (sum `n2`), zeros follow `D1`.
    O2,
}

/// A 0/1 population over `N = n1 + n2` indices whose sampling distribution
/// is an even mixture of the two spectra, with a uniform nominal distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionInstance {
    pub scenario: Scenario,
    pub population: Population,
    pub true_dist: Distribution,
    pub nominal: Distribution,
    /// Number of one-valued indices, i.e. the exact sum.
    pub ones: u64,
    /// `max_i |N Q(i) - 1|`, exact.
    pub closeness: BigRational,
}

impl ReductionInstance {
    pub fn n(&self) -> usize {
        self.population.len()
    }

    /// The instance as a perturbed pair with bound just above the exact closeness.
    pub fn pair(&self) -> Result<PerturbedPair> {
        let gamma = to_f64(&self.closeness) * (1.0 + 1e-9) + 1e-15;
        PerturbedPair::from_distributions(self.nominal.clone(), self.true_dist.clone(), gamma)
    }
}

/// Lays out one scenario. Index labels are shuffled with a generator seeded
/// by `seed`; collision-based estimators do not depend on the labelling.
pub fn build_reduction_instance(pair: &RealizedPair, scenario: Scenario, seed: u64) -> Result<ReductionInstance> {
    let (ones_spec, zeros_spec) = match scenario {
        Scenario::O1 => (&pair.d1, &pair.d2),
        Scenario::O2 => (&pair.d2, &pair.d1),
    };
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let n_ones = ones_spec.support_size();
    let n_total = n_ones + zeros_spec.support_size();
    let n = usize::try_from(n_total).map_err(|_| invalid!("support of {n_total} points is too large"))?;

    let mut points: Vec<(f64, BigRational)> = Vec::with_capacity(n);
    for p in ones_spec.expand() {
        points.push((1.0, p * &half));
    }
    for p in zeros_spec.expand() {
        points.push((0.0, p * &half));
    }
    let total = points.iter().fold(BigRational::zero(), |acc, (_, q)| acc + q);
    if !total.is_one() {
        return Err(invalid!("realized spectra do not carry unit mass (total {total})"));
    }
    let n_r = int(n_total);
    let closeness = ones_spec
        .levels
        .iter()
        .chain(&zeros_spec.levels)
        .map(|l| (&l.prob * &half * &n_r - BigRational::one()).abs())
        .fold(BigRational::zero(), |acc, d| if d > acc { d } else { acc });

    let mut rng = rng_from_seed(seed);
    for i in (1..n).rev() {
        let j = uniform_index(&mut rng, i + 1);
        points.swap(i, j);
    }
    let values: Vec<f64> = points.iter().map(|(v, _)| *v).collect();
    let probs: Vec<f64> = points.iter().map(|(_, q)| to_f64(q)).collect();
    let drift = probs.iter().copied().collect::<CompensatedSum>().value() - 1.0;
    debug_assert!(drift.abs() < 1e-12);
    Ok(ReductionInstance {
        scenario,
        population: Population::new(values)?,
        true_dist: Distribution::new(probs)?,
        nominal: Distribution::uniform(n)?,
        ones: n_ones,
        closeness,
    })
}

/// `gcd`-reduced rational `num/den`.
pub fn ratio(num: i64, den: i64) -> BigRational {
    let g = num.gcd(&den).max(1);
    BigRational::new(BigInt::from(num / g), BigInt::from(den / g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        ratio(n, d)
    }

    #[test]
    fn alternating_sum_examples() {
        let s = alternating_binomial_sum(1, &r(1, 1), &r(1, 2)).unwrap();
        assert_eq!(s, r(1, 3));
        assert_eq!(alternating_binomial_closed_form(1, &r(1, 1), &r(1, 2)).unwrap(), r(1, 3));
        assert_eq!(alternating_binomial_sum(2, &r(1, 1), &r(1, 1)).unwrap(), r(1, 3));
        assert_eq!(alternating_binomial_closed_form(2, &r(1, 1), &r(1, 1)).unwrap(), r(1, 3));
        for k in 1..6 {
            assert!(alternating_binomial_sum(k, &r(3, 1), &r(0, 1)).unwrap().is_zero());
            assert!(alternating_binomial_closed_form(k, &r(3, 1), &r(0, 1)).unwrap().is_zero());
        }
        assert_eq!(alternating_binomial_sum(3, &r(-2, 1), &r(1, 1)), Err(Error::Pole(2)));
    }

    #[test]
    fn alternating_sum_matches_closed_form_up_to_32() {
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let a = r(1 + uniform_index(&mut rng, 50) as i64, 1 + uniform_index(&mut rng, 20) as i64);
            let g = r(uniform_index(&mut rng, 40) as i64 - 20, 1 + uniform_index(&mut rng, 20) as i64);
            for k in [1usize, 2, 5, 13, 32] {
                match (alternating_binomial_sum(k, &a, &g), alternating_binomial_closed_form(k, &a, &g)) {
                    (Ok(x), Ok(y)) => assert_eq!(x, y, "k={k} a={a} g={g}"),
                    (Err(Error::Pole(_)), Err(Error::Pole(_))) => {}
                    other => panic!("inconsistent: {other:?}"),
                }
            }
        }
    }

    #[test]
    fn first_order_pair() {
        let g = r(1, 2);
        let p = construct_pair(1, &g, 3).unwrap();
        assert_eq!(p.d1.levels.len(), 1);
        assert_eq!(p.d1.levels[0].count, r(3, 1));
        assert_eq!(p.d1.levels[0].prob, r(1, 3));
        assert_eq!(p.d2.levels[0].count, r(2, 1));
        assert_eq!(p.d2.levels[0].prob, r(1, 2));
        assert_eq!(p.gap, r(1, 1));
        assert_eq!(support_gap_closed_form(1, &g, 3).unwrap(), r(3, 1) * &g / (r(1, 1) + &g));
        assert!(p.check().all(), "{:?}", p.check());
    }

    #[test]
    fn second_order_pair() {
        let g = r(1, 2);
        let p = construct_pair(2, &g, 60).unwrap();
        assert_eq!(p.n1, r(50, 1));
        assert_eq!(p.n2, r(48, 1));
        assert_eq!(p.gap, r(2, 1));
        assert_eq!(p.d1.frequency_moment(2), r(5, 4 * 60));
        assert_eq!(p.d2.frequency_moment(2), r(5, 4 * 60));
        assert_eq!(support_gap_closed_form(2, &g, 60).unwrap(), r(2, 1));
        assert!(p.check().all());
        let generic = construct_pair(2, &g, 7).unwrap();
        assert_eq!(generic.gap, r(7, 30));
    }

    #[test]
    fn gap_scaling_in_gamma() {
        let (k, n0) = (3usize, 1000u64);
        let (g, h) = (r(1, 4), r(1, 10));
        let ratio_gaps = support_gap_closed_form(k, &g, n0).unwrap() / support_gap_closed_form(k, &h, n0).unwrap();
        let kk = r(k as i64, 1);
        let mut expect = pow(&(&g / &h), k);
        for i in 1..=k {
            let ii = r(i as i64, 1);
            expect = expect * (r(1, 1) + &h * &ii / &kk) / (r(1, 1) + &g * &ii / &kk);
        }
        assert_eq!(ratio_gaps, expect);
    }

    #[test]
    fn moments_match_across_grid() {
        for k in 1..=8 {
            for g in [r(1, 10), r(1, 4), r(1, 2)] {
                for n0 in [1_000u64, 10_000] {
                    let p = construct_pair(k, &g, n0).unwrap();
                    let c = p.check();
                    assert!(c.all(), "k={k} g={g} n0={n0}: {c:?}");
                    assert_eq!(frequency_moment(&p.d1, 1).unwrap(), BigRational::one());
                }
            }
        }
    }

    #[test]
    fn construction_preconditions() {
        assert!(construct_pair(2, &r(3, 5), 10).is_err());
        assert!(construct_pair(2, &r(0, 1), 10).is_err());
        assert!(construct_pair(0, &r(1, 4), 10).is_err());
        assert!(construct_pair(2, &r(1, 4), 0).is_err());
        assert!(frequency_moment(&construct_pair(1, &r(1, 4), 4).unwrap().d1, 0).is_err());
    }

    #[test]
    fn uniform_spectrum_second_moment() {
        let s = MassSpectrum { n0: 8, levels: vec![Level { i: 0, prob: r(1, 8), count: r(8, 1) }] };
        assert_eq!(s.frequency_moment(2), r(1, 8));
    }

    #[test]
    fn realize_integral_counts_unchanged() {
        let p = construct_pair(1, &r(1, 2), 3).unwrap();
        let real = realize_integer_counts(&p, RoundingMode::Nearest).unwrap();
        assert_eq!(real.d2.levels[0].count, 2);
        assert_eq!(real.d2.levels[0].prob, r(1, 2));
        assert_eq!(real.moment_error, 0.0);

        let p = construct_pair(2, &r(1, 2), 60).unwrap();
        let real = realize_integer_counts(&p, RoundingMode::Exact).unwrap();
        let c1: Vec<u64> = real.d1.levels.iter().map(|l| l.count).collect();
        assert_eq!(c1, vec![30, 20]);
        assert_eq!(real.d2.levels[0].count, 48);
        assert_eq!(real.moment_error, 0.0);
        assert_eq!(real.gap(), 2);
    }

    #[test]
    fn realize_rounded_counts() {
        let p = construct_pair(2, &r(1, 2), 61).unwrap();
        assert!(realize_integer_counts(&p, RoundingMode::Exact).is_err());
        let real = realize_integer_counts(&p, RoundingMode::Nearest).unwrap();
        assert!(real.moment_error > 0.0);
        assert!(real.moment_error <= 10.0 * 2.0 / 61.0, "{}", real.moment_error);
        assert!(real.d1.frequency_moment(1).is_one());
        assert!(real.d2.frequency_moment(1).is_one());
    }

    #[test]
    fn realize_rejects_empty_levels() {
        // tiny n0: the top level of D1 rounds away
        let p = construct_pair(4, &r(1, 2), 3).unwrap();
        assert!(matches!(realize_integer_counts(&p, RoundingMode::Nearest), Err(Error::EmptyLevel { .. })));
    }

    #[test]
    fn reduction_instances() {
        let p = construct_pair(1, &r(1, 2), 3).unwrap();
        let real = realize_integer_counts(&p, RoundingMode::Exact).unwrap();
        let o1 = build_reduction_instance(&real, Scenario::O1, 9).unwrap();
        assert_eq!(o1.n(), 5);
        assert_eq!(o1.ones, 3);
        assert_eq!(o1.population.sum(), 3.0);
        for (&v, &q) in o1.population.values().iter().zip(o1.true_dist.probs()) {
            let want = if v == 1.0 { 1.0 / 6.0 } else { 0.25 };
            assert!((q - want).abs() < 1e-16);
        }
        assert_eq!(o1.closeness, r(1, 4));
        assert!(o1.pair().unwrap().is_pointwise_close());

        let o2 = build_reduction_instance(&real, Scenario::O2, 9).unwrap();
        assert_eq!(o2.ones, 2);
        for (&v, &q) in o2.population.values().iter().zip(o2.true_dist.probs()) {
            let want = if v == 1.0 { 0.25 } else { 1.0 / 6.0 };
            assert!((q - want).abs() < 1e-16);
        }
        assert_eq!(o1.ones - o2.ones, real.gap() as u64);
    }

    #[test]
    fn reduction_sums_differ_by_gap() {
        for k in 1..=4 {
            let p = construct_pair(k, &r(1, 4), 2_000).unwrap();
            let real = realize_integer_counts(&p, RoundingMode::Nearest).unwrap();
            let o1 = build_reduction_instance(&real, Scenario::O1, 1).unwrap();
            let o2 = build_reduction_instance(&real, Scenario::O2, 1).unwrap();
            assert_eq!(o1.population.sum() - o2.population.sum(), real.gap() as f64);
            assert_eq!(o1.n(), o2.n());
        }
    }
}
