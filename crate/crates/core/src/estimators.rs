//! Collision estimators and the two-stage sum estimator.
//!
//! For a frequency vector `Y` of `m` samples, the `h`-wise collision
//! estimator centred at a pilot value `W` is
//!
//! ```text
//! xi_h = (1 / C(m, h)) * sum_i C(Y_i, h) * (x_i - P(i) W) / P(i)^h
//! ```
//!
//! and the order-`k` bias-reducing estimate is
//! `W + sum_{h=1..k} (-1)^(h+1) C(k, h) xi_h`. When `Q(i) = (1 + g_i) P(i)`
//! its expectation is `W + sum_i (x_i - P(i) W) (1 + (-1)^(k+1) g_i^k)`, so
//! the bias shrinks geometrically in `k`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::math::{abs, binom_f64, powi, sign_pow, CompensatedSum};
use crate::model::{Distribution, PerturbedPair, Population, SampleBatch};
use crate::sampler::{rng_from_seed, AliasTable};
use crate::MAX_ORDER;

/// Magnitude beyond which a collision term is recomputed in log space.
const OVERFLOW_GUARD: f64 = 1e300;

/// Sparse sample counts: `(index, Y_i)` for every sampled index, sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyVector {
    n: usize,
    m: usize,
    entries: Vec<(usize, u64)>,
}

impl FrequencyVector {
    pub fn from_batch(batch: &SampleBatch, n: usize) -> Result<Self> {
        batch.check_range(n)?;
        let mut sorted = batch.indices().to_vec();
        sorted.sort_unstable();
        let mut entries: Vec<(usize, u64)> = Vec::new();
        for i in sorted {
            match entries.last_mut() {
                Some((last, c)) if *last == i => *c += 1,
                _ => entries.push((i, 1)),
            }
        }
        Ok(FrequencyVector { n, m: batch.m(), entries })
    }

    /// From dense counts `Y_0..Y_{N-1}`.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let entries: Vec<(usize, u64)> =
            counts.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, &c)| (i, c)).collect();
        let m: u64 = entries.iter().map(|&(_, c)| c).sum();
        if m == 0 {
            return Err(Error::Empty("frequency vector"));
        }
        Ok(FrequencyVector { n: counts.len(), m: m as usize, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Sampled indices with their counts.
    pub fn entries(&self) -> &[(usize, u64)] {
        &self.entries
    }

    pub fn count(&self, index: usize) -> u64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Vec<u64> {
        let mut out = alloc::vec![0; self.n];
        for &(i, c) in &self.entries {
            out[i] = c;
        }
        out
    }

    pub fn max_count(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| c).max().unwrap_or(0)
    }
}

pub fn frequency_vector(batch: &SampleBatch, n: usize) -> Result<FrequencyVector> {
    FrequencyVector::from_batch(batch, n)
}

/// `value * C(y, h) / (C(m, h) * p^h)` as `value * prod_j (y - j) / ((m - j) p)`.
pub fn collision_term(value: f64, y: u64, m: usize, h: usize, p: f64) -> f64 {
    if value == 0.0 || (y as usize) < h {
        return 0.0;
    }
    let mut acc = value;
    for j in 0..h {
        acc *= (y as f64 - j as f64) / ((m - j) as f64 * p);
        if !(abs(acc) <= OVERFLOW_GUARD) {
            return collision_term_log(value, y, m, h, p);
        }
    }
    acc
}

fn collision_term_log(value: f64, y: u64, m: usize, h: usize, p: f64) -> f64 {
    let mut log_mag = libm::log(abs(value));
    let log_p = libm::log(p);
    for j in 0..h {
        log_mag += libm::log(y as f64 - j as f64) - libm::log((m - j) as f64) - log_p;
    }
    let sign = if value < 0.0 { -1.0 } else { 1.0 };
    sign * libm::exp(log_mag)
}

fn check_inputs(n: usize, pop: &Population, nominal: &Distribution) -> Result<()> {
    if pop.len() != nominal.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: nominal.len() });
    }
    if n != pop.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: n });
    }
    nominal.require_positive()
}

/// The `h`-wise collision estimator centred at `w`.
///
/// Only sampled indices are visited, so the cost is linear in the number of
/// distinct samples.
pub fn xi_h(freq: &FrequencyVector, h: usize, pop: &Population, nominal: &Distribution, w: f64) -> Result<f64> {
    check_inputs(freq.n(), pop, nominal)?;
    if h == 0 || h > freq.m() {
        return Err(invalid!("collision order h = {h} must lie in 1..={}", freq.m()));
    }
    Ok(xi_unchecked(freq, h, pop.values(), nominal.probs(), w))
}

fn xi_unchecked(freq: &FrequencyVector, h: usize, x: &[f64], p: &[f64], w: f64) -> f64 {
    let m = freq.m();
    freq.entries()
        .iter()
        .map(|&(i, y)| collision_term(x[i] - p[i] * w, y, m, h, p[i]))
        .collect::<CompensatedSum>()
        .value()
}

/// Output of one run of the estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub k: usize,
    pub m: usize,
    /// Pilot sample size; zero when the pilot value was supplied directly.
    pub t: usize,
    #[serde(rename = "pilot_W")]
    pub pilot_w: f64,
    pub xi_values: Vec<f64>,
    pub seed: Option<u64>,
}

impl EstimatorReport {
    /// Recombines the stored `xi_h` values.
    pub fn recombined(&self) -> f64 {
        combine(self.pilot_w, &self.xi_values)
    }
}

fn combine(w: f64, xi: &[f64]) -> f64 {
    let k = xi.len();
    let mut s = CompensatedSum::new();
    s.add(w);
    for (h, &v) in (1..=k).zip(xi) {
        s.add(sign_pow(h + 1) * binom_f64(k, h) * v);
    }
    s.value()
}

fn check_order(k: usize, m: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid!("estimator order k must be positive"));
    }
    if k > MAX_ORDER {
        return Err(invalid!("estimator order k = {k} exceeds the cap of {MAX_ORDER}"));
    }
    if k > m {
        return Err(invalid!("estimator order k = {k} exceeds the sample size m = {m}"));
    }
    Ok(())
}

/// Order-`k` estimate from an already tallied frequency vector.
pub fn estimate_from_frequencies(
    freq: &FrequencyVector,
    k: usize,
    w: f64,
    pop: &Population,
    nominal: &Distribution,
) -> Result<EstimatorReport> {
    check_inputs(freq.n(), pop, nominal)?;
    check_order(k, freq.m())?;
    let xi_values: Vec<f64> =
        (1..=k).map(|h| xi_unchecked(freq, h, pop.values(), nominal.probs(), w)).collect();
    Ok(EstimatorReport {
        estimate: combine(w, &xi_values),
        k,
        m: freq.m(),
        t: 0,
        pilot_w: w,
        xi_values,
        seed: None,
    })
}

/// Single-stage estimator of order `k` with pilot value `w`.
///
/// With `k = 1`, `w = 0` and `Q = P` this is the Hansen-Hurwitz estimator.
pub fn estimate_sum(
    batch: &SampleBatch,
    k: usize,
    w: f64,
    pop: &Population,
    nominal: &Distribution,
) -> Result<EstimatorReport> {
    let freq = FrequencyVector::from_batch(batch, pop.len())?;
    let mut report = estimate_from_frequencies(&freq, k, w, pop, nominal)?;
    report.seed = Some(batch.seed());
    Ok(report)
}

/// Hansen-Hurwitz estimate `(1/m) sum_j x_{X_j} / P(X_j)` evaluated per sample.
pub fn hansen_hurwitz(batch: &SampleBatch, pop: &Population, nominal: &Distribution) -> Result<f64> {
    check_inputs(pop.len(), pop, nominal)?;
    batch.check_range(pop.len())?;
    let x = pop.values();
    let p = nominal.probs();
    let s: CompensatedSum = batch.indices().iter().map(|&i| x[i] / p[i]).collect();
    Ok(s.value() / batch.m() as f64)
}

/// Two-stage estimate from pre-drawn batches: a first-order pilot on `pilot`,
/// then the order-`k` estimator centred at the pilot on `main`.
pub fn two_stage_from_batches(
    pilot: &SampleBatch,
    main: &SampleBatch,
    k: usize,
    pop: &Population,
    nominal: &Distribution,
) -> Result<EstimatorReport> {
    let w = estimate_sum(pilot, 1, 0.0, pop, nominal)?.estimate;
    let mut report = estimate_sum(main, k, w, pop, nominal)?;
    report.t = pilot.m();
    Ok(report)
}

/// Two-stage estimator: `t` pilot samples, then `m` main samples, all drawn
/// in order from one generator seeded with `seed`.
pub fn improved_estimate_sum(
    sampler: &AliasTable,
    plan: &PlanParameters,
    pop: &Population,
    nominal: &Distribution,
    seed: u64,
) -> Result<EstimatorReport> {
    if plan.t == 0 {
        return Err(invalid!("the pilot stage needs at least one sample (t = 0)"));
    }
    check_order(plan.k, plan.m)?;
    if sampler.len() != pop.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: sampler.len() });
    }
    let mut rng = rng_from_seed(seed);
    let pilot = SampleBatch::new(sampler.sample_many(&mut rng, plan.t), seed)?;
    let main = SampleBatch::new(sampler.sample_many(&mut rng, plan.m), seed)?;
    two_stage_from_batches(&pilot, &main, plan.k, pop, nominal)
}

/// Inputs a plan was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanInputs {
    pub gamma: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub n_tilde: f64,
    pub v: f64,
    pub c_m: f64,
    pub c_t: f64,
}

/// Sample sizes and order for the two-stage estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanParameters {
    pub k: usize,
    pub m: usize,
    pub t: usize,
    pub inputs: Option<PlanInputs>,
}

impl PlanParameters {
    pub const DEFAULT_C_M: f64 = 4.0;
    pub const DEFAULT_C_T: f64 = 16.0;

    /// A plan with sizes given directly.
    pub fn explicit(k: usize, m: usize, t: usize) -> Result<Self> {
        check_order(k, m)?;
        if t == 0 {
            return Err(invalid!("pilot size t must be at least 1"));
        }
        Ok(PlanParameters { k, m, t, inputs: None })
    }

    pub fn total_samples(&self) -> usize {
        self.t + self.m
    }
}

/// `k = ceil(lg eps / lg gamma)`, the smallest order with `gamma^k <= eps`.
///
/// Ratios within `1e-9` (relative) of an integer snap to it, so that e.g.
/// `eps = gamma^2` gives 2 despite rounding in the logarithms.
pub fn order_for(gamma: f64, eps: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid!("gamma must lie in (0, 1), got {gamma}"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(invalid!("eps1 must lie in (0, 1), got {eps}"));
    }
    let ratio = libm::log(eps) / libm::log(gamma);
    let nearest = libm::round(ratio);
    let k = if abs(ratio - nearest) <= 1e-9 * ratio { nearest } else { libm::ceil(ratio) };
    let k = if k < 1.0 { 1.0 } else { k };
    if k > MAX_ORDER as f64 {
        return Err(invalid!("required order {k} exceeds the cap of {MAX_ORDER}"));
    }
    Ok(k as usize)
}

/// Ceiling that first snaps values within `1e-9` (relative) of an integer.
fn ceil_snapped(x: f64) -> f64 {
    let nearest = libm::round(x);
    if abs(x - nearest) <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        libm::ceil(x)
    }
}

/// Derives `(k, m, t)` from accuracy targets. Real-valued sizes within
/// `1e-9` (relative) of an integer snap to it before the ceiling.
///
/// `m = ceil(c_m (n_tilde^(k-1) eps2^-2 V)^(1/k))` clamped to at least `k`,
/// `t = ceil(c_t (1 + gamma^(2k) eps2^-2 V))`.
pub fn plan_parameters(
    gamma: f64,
    eps1: f64,
    eps2: f64,
    n_tilde: f64,
    v: f64,
    c_m: f64,
    c_t: f64,
) -> Result<PlanParameters> {
    let k = order_for(gamma, eps1)?;
    if !(eps2 > 0.0) || !eps2.is_finite() {
        return Err(invalid!("eps2 must be positive, got {eps2}"));
    }
    if !(v >= 0.0) || !v.is_finite() {
        return Err(invalid!("variance bound V must be non-negative, got {v}"));
    }
    if !(n_tilde >= 1.0) || !n_tilde.is_finite() {
        return Err(invalid!("n_tilde must be at least 1, got {n_tilde}"));
    }
    if !(c_m > 0.0 && c_t > 0.0) {
        return Err(invalid!("constants c_m and c_t must be positive"));
    }
    let m_real = if v == 0.0 {
        0.0
    } else {
        let log_inner = (k as f64 - 1.0) * libm::log(n_tilde) - 2.0 * libm::log(eps2) + libm::log(v);
        c_m * libm::exp(log_inner / k as f64)
    };
    let t_real = c_t * (1.0 + powi(gamma, 2 * k as u32) * v / (eps2 * eps2));
    if !(m_real < 1e18 && t_real < 1e18) {
        return Err(invalid!("sample sizes overflow (m ~ {m_real}, t ~ {t_real})"));
    }
    let m = (ceil_snapped(m_real) as usize).max(k);
    let t = (ceil_snapped(t_real) as usize).max(1);
    Ok(PlanParameters {
        k,
        m,
        t,
        inputs: Some(PlanInputs { gamma, eps1, eps2, n_tilde, v, c_m, c_t }),
    })
}

/// Exact expectation of [`estimate_sum`] for a fixed pilot `w`:
/// `w + sum_i (x_i - P(i) w) (1 + (-1)^(k+1) g_i^k)`.
pub fn closed_form_expectation(pop: &Population, pair: &PerturbedPair, k: usize, w: f64) -> Result<f64> {
    if pop.len() != pair.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: pair.len() });
    }
    let mut s = CompensatedSum::new();
    s.add(w);
    let sign = sign_pow(k + 1);
    for (xbar, &g) in pop.centered(pair.nominal(), w).into_iter().zip(pair.deviations()) {
        s.add(xbar);
        s.add(xbar * sign * powi(g, k as u32));
    }
    Ok(s.value())
}

/// Upper bound on `|E[estimate] - mu|`.
///
/// `k >= 2`: `gamma^k sum |x_i - P(i) w|`.
/// `k = 1`: `gamma sum |x_i - P(i) w - P(i) (mu - w)|`.
pub fn bias_bound(pop: &Population, nominal: &Distribution, gamma: f64, k: usize, w: f64) -> Result<f64> {
    if pop.len() != nominal.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: nominal.len() });
    }
    if k == 0 {
        return Err(invalid!("estimator order k must be positive"));
    }
    let xbar = pop.centered(nominal, w);
    if k >= 2 {
        let s: CompensatedSum = xbar.iter().map(|&v| abs(v)).collect();
        Ok(powi(gamma, k as u32) * s.value())
    } else {
        let mu_bar = xbar.iter().copied().collect::<CompensatedSum>().value();
        let s: CompensatedSum =
            xbar.iter().zip(nominal.probs()).map(|(&v, &p)| abs(v - p * mu_bar)).collect();
        Ok(gamma * s.value())
    }
}

/// Upper bound on the variance of the order-`k` estimate with `m` samples,
/// evaluated on the values centred at `w`.
///
/// `k >= 2`: `max{ 2(1+g) g^(2k-2) k^2 S / m, 2^k (1+g)^k k^(3k) n_tilde^(k-1) S / m^k }`
/// with `S = sum_i (x_i - P(i) w)^2 / P(i)`.
/// `k = 1`: `(1+g) sum_i (x_i - P(i) mu)^2 / P(i) / m`.
pub fn variance_bound(
    pop: &Population,
    nominal: &Distribution,
    gamma: f64,
    k: usize,
    m: usize,
    w: f64,
) -> Result<f64> {
    if pop.len() != nominal.len() {
        return Err(Error::DimensionMismatch { expected: pop.len(), got: nominal.len() });
    }
    if k == 0 || k > m {
        return Err(invalid!("need 1 <= k <= m, got k = {k}, m = {m}"));
    }
    let n_tilde = nominal.n_tilde()?;
    let xbar = pop.centered(nominal, w);
    let probs = nominal.probs();
    let mf = m as f64;
    if k == 1 {
        let mu_bar = xbar.iter().copied().collect::<CompensatedSum>().value();
        let s: CompensatedSum = xbar
            .iter()
            .zip(probs)
            .map(|(&v, &p)| {
                let d = v - p * mu_bar;
                d * d / p
            })
            .collect();
        return Ok((1.0 + gamma) * s.value() / mf);
    }
    let s = xbar.iter().zip(probs).map(|(&v, &p)| v * v / p).collect::<CompensatedSum>().value();
    let kf = k as f64;
    let ku = k as u32;
    let first = 2.0 * (1.0 + gamma) * powi(gamma, 2 * ku - 2) * kf * kf * s / mf;
    let second = powi(2.0 * (1.0 + gamma), ku) * powi(kf, 3 * ku) * powi(n_tilde, ku - 1) * s / powi(mf, ku);
    Ok(if first > second { first } else { second })
}
