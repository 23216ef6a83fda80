//! Monte Carlo experiments.
//!
//! Trial `i` of a run seeded with `s` uses seed `s + i` (wrapping), so
//! results do not depend on how trials are spread over threads. Estimates are
//! collected in trial order before any statistic is computed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use noisysum_core::estimators::{order_for, PlanParameters};
use noisysum_core::moments::{build_reduction_instance, RealizedPair, Scenario};
use noisysum_core::{
    bias_bound, closed_form_expectation, estimate_sum, improved_estimate_sum, worst_case_pair, AliasTable,
    Distribution, PerturbedPair, Population, MAX_ORDER,
};

use crate::error::{infeasible, usage, AppResult};

/// Which estimator a trial runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrialMode {
    /// Pilot on `t` samples, then order `k` on `m` samples.
    TwoStage(PlanParameters),
    /// Order `k` on `m` samples around a fixed pilot value.
    FixedPilot { k: usize, m: usize, w: f64 },
}

impl TrialMode {
    pub fn k(&self) -> usize {
        match self {
            TrialMode::TwoStage(p) => p.k,
            TrialMode::FixedPilot { k, .. } => *k,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            TrialMode::TwoStage(p) => p.m,
            TrialMode::FixedPilot { m, .. } => *m,
        }
    }

    pub fn t(&self) -> usize {
        match self {
            TrialMode::TwoStage(p) => p.t,
            TrialMode::FixedPilot { .. } => 0,
        }
    }
}

/// The error budget a trial must meet to count as a success.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ErrorFunctional {
    /// `|estimate - mu| <= budget`.
    AbsVsMu { budget: f64 },
    /// `eps1 (1 + gamma) E_P |x_X / P(X) - mu| + eps2`.
    Thm21 { eps1: f64, eps2: f64, gamma: f64 },
    /// `eps (mu + sqrt(mu N))`.
    Corollary { eps: f64 },
}

impl ErrorFunctional {
    pub fn budget(&self, pop: &Population, nominal: &Distribution) -> f64 {
        let mu = pop.sum();
        match *self {
            ErrorFunctional::AbsVsMu { budget } => budget,
            ErrorFunctional::Thm21 { eps1, eps2, gamma } => {
                let spread: f64 = pop
                    .values()
                    .iter()
                    .zip(nominal.probs())
                    .map(|(&x, &p)| p * (x / p - mu).abs())
                    .sum();
                eps1 * (1.0 + gamma) * spread + eps2
            }
            ErrorFunctional::Corollary { eps } => {
                let mu = mu.max(0.0);
                eps * (mu + (mu * pop.len() as f64).sqrt())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub population: Population,
    pub pair: PerturbedPair,
    pub mode: TrialMode,
    pub trials: usize,
    pub base_seed: u64,
    pub error: ErrorFunctional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: usize,
    pub mean: f64,
    /// Unbiased sample variance; zero for a single trial.
    pub variance: f64,
    pub success_rate: f64,
    /// Quantiles of `|estimate - mu|`, linearly interpolated.
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub samples_per_trial: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, ss / (n - 1.0))
}

/// Runs every trial and returns the estimates in trial order.
pub fn trial_estimates(config: &TrialConfig) -> AppResult<Vec<f64>> {
    if config.trials == 0 {
        return Err(usage("at least one trial is required"));
    }
    if config.population.len() != config.pair.len() {
        return Err(usage("population and distributions differ in length"));
    }
    let table = AliasTable::new(config.pair.true_dist());
    let nominal = config.pair.nominal();
    let pop = &config.population;
    (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let seed = config.base_seed.wrapping_add(i as u64);
            let report = match config.mode {
                TrialMode::TwoStage(plan) => improved_estimate_sum(&table, &plan, pop, nominal, seed)?,
                TrialMode::FixedPilot { k, m, w } => estimate_sum(&table.draw_batch(m, seed)?, k, w, pop, nominal)?,
            };
            Ok(report.estimate)
        })
        .collect()
}

pub fn summarize(config: &TrialConfig, estimates: &[f64]) -> TrialStats {
    let mu = config.population.sum();
    let budget = config.error.budget(&config.population, config.pair.nominal());
    let (mean, variance) = mean_var(estimates);
    let mut errors: Vec<f64> = estimates.iter().map(|e| (e - mu).abs()).collect();
    let successes = errors.iter().filter(|&&e| e <= budget).count();
    errors.sort_by(f64::total_cmp);
    TrialStats {
        trials: estimates.len(),
        mean,
        variance,
        success_rate: successes as f64 / estimates.len() as f64,
        q50: quantile(&errors, 0.5),
        q90: quantile(&errors, 0.9),
        q99: quantile(&errors, 0.99),
        samples_per_trial: config.mode.t() + config.mode.m(),
    }
}

pub fn run_trials(config: &TrialConfig) -> AppResult<TrialStats> {
    let estimates = trial_estimates(config)?;
    Ok(summarize(config, &estimates))
}

/// One row of the trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub exp: String,
    pub n: usize,
    pub gamma: f64,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub k: usize,
    pub m: usize,
    pub t: usize,
    #[serde(rename = "T")]
    pub trials: usize,
    pub seed: u64,
    pub mean: f64,
    pub var: f64,
    pub q50: f64,
    pub q90: f64,
    pub q99: f64,
    pub success_rate: f64,
}

impl TrialRow {
    pub fn new(exp: &str, config: &TrialConfig, stats: &TrialStats, eps1: Option<f64>, eps2: Option<f64>) -> Self {
        TrialRow {
            exp: exp.to_string(),
            n: config.population.len(),
            gamma: config.pair.gamma(),
            eps1,
            eps2,
            k: config.mode.k(),
            m: config.mode.m(),
            t: config.mode.t(),
            trials: stats.trials,
            seed: config.base_seed,
            mean: stats.mean,
            var: stats.variance,
            q50: stats.q50,
            q90: stats.q90,
            q99: stats.q99,
            success_rate: stats.success_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub k: usize,
    pub exact_bias: f64,
    /// `gamma^k mu_+`.
    pub bound: f64,
    pub ratio: f64,
}

/// Exact bias `|E - mu|` per order with the pilot fixed at zero; no sampling.
pub fn bias_decay_sweep(pop: &Population, pair: &PerturbedPair, ks: &[usize]) -> AppResult<Vec<BiasRow>> {
    let mu = pop.sum();
    let mu_plus = pop.abs_sum();
    ks.iter()
        .map(|&k| {
            let exact_bias = (closed_form_expectation(pop, pair, k, 0.0)? - mu).abs();
            let bound = pair.gamma().powi(k as i32) * mu_plus;
            let ratio = if bound > 0.0 { exact_bias / bound } else { 0.0 };
            Ok(BiasRow { k, exact_bias, bound, ratio })
        })
        .collect()
}

/// Default balanced split for a uniform nominal distribution over an even
/// number of indices: the `N/2` largest values, ties by index.
pub fn default_split(pop: &Population) -> AppResult<Vec<usize>> {
    let n = pop.len();
    if !n.is_multiple_of(2) {
        return Err(infeasible("a balanced split of a uniform distribution needs an even number of indices"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pop.values()[b].total_cmp(&pop.values()[a]).then(a.cmp(&b)));
    order.truncate(n / 2);
    order.sort_unstable();
    Ok(order)
}

/// The worst-case pair over a uniform nominal distribution.
pub fn uniform_worst_case(pop: &Population, gamma: f64) -> AppResult<PerturbedPair> {
    let p = Distribution::uniform(pop.len())?;
    Ok(worst_case_pair(&p, gamma, &default_split(pop)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroOneParams {
    pub n: usize,
    pub fraction_ones: f64,
    pub gamma: f64,
    pub eps: f64,
    pub trials: usize,
    pub c_m: f64,
    pub c_t: f64,
    pub seed: u64,
}

/// Builds the 0/1 experiment: `ceil(fraction n)` leading ones, uniform
/// nominal distribution, `+gamma` on the first half of the indices and
/// `-gamma` on the rest, `k = ceil(lg eps / lg gamma)`,
/// `m = ceil(c_m n^(1-1/k) eps^(-2/k))` and `t = ceil(c_t (1 + gamma^(2k) / eps^2))`.
pub fn zero_one_config(params: &ZeroOneParams) -> AppResult<TrialConfig> {
    let ZeroOneParams { n, fraction_ones, gamma, eps, trials, c_m, c_t, seed } = *params;
    if !(0.0..=1.0).contains(&fraction_ones) {
        return Err(usage("fraction of ones must lie in [0, 1]"));
    }
    if !(eps > 0.0 && eps <= gamma && gamma < 1.0) {
        return Err(infeasible(format!("need 0 < eps <= gamma < 1, got eps = {eps}, gamma = {gamma}")));
    }
    if n == 0 || n % 2 != 0 {
        return Err(infeasible("the zero-one experiment needs an even, positive n"));
    }
    let ones = (fraction_ones * n as f64).ceil() as usize;
    let x: Vec<f64> = (0..n).map(|i| if i < ones { 1.0 } else { 0.0 }).collect();
    let population = Population::new(x)?;
    let p = Distribution::uniform(n)?;
    let split: Vec<usize> = (0..n / 2).collect();
    let pair = worst_case_pair(&p, gamma, &split)?;
    let k = order_for(gamma, eps)?;
    let kf = k as f64;
    let m = ((c_m * (n as f64).powf(1.0 - 1.0 / kf) * eps.powf(-2.0 / kf)).ceil() as usize).max(k);
    let t = ((c_t * (1.0 + gamma.powi(2 * k as i32) / (eps * eps))).ceil() as usize).max(1);
    let plan = PlanParameters::explicit(k, m, t)?;
    Ok(TrialConfig {
        population,
        pair,
        mode: TrialMode::TwoStage(plan),
        trials,
        base_seed: seed,
        error: ErrorFunctional::Corollary { eps },
    })
}

pub fn zero_one_experiment(params: &ZeroOneParams) -> AppResult<(TrialConfig, TrialStats)> {
    let config = zero_one_config(params)?;
    let stats = run_trials(&config)?;
    Ok((config, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistinguishRow {
    pub m: usize,
    pub k: usize,
    pub mean_estimate_o1: f64,
    pub mean_estimate_o2: f64,
    pub var_o1: f64,
    pub var_o2: f64,
    pub separation_z: f64,
}

/// `|mean1 - mean2| / sqrt((var1 + var2) / T)`; zero when both arms are constant.
pub fn separation_z(a: &[f64], b: &[f64]) -> f64 {
    let (m1, v1) = mean_var(a);
    let (m2, v2) = mean_var(b);
    let se = ((v1 + v2) / a.len() as f64).sqrt();
    if se > 0.0 {
        (m1 - m2).abs() / se
    } else if m1 == m2 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Runs the two-stage estimator of order `k + 1` (pilot size `m`) on both
/// reduction scenarios for each `m`. With `null` set, both arms use scenario
/// one, which calibrates the separation statistic.
pub fn distinguishability_experiment(
    pair: &RealizedPair,
    m_values: &[usize],
    trials: usize,
    seed: u64,
    null: bool,
) -> AppResult<Vec<DistinguishRow>> {
    if trials < 30 {
        return Err(usage("the separation statistic needs at least 30 trials per arm"));
    }
    let k = (pair.k + 1).min(MAX_ORDER);
    let o1 = build_reduction_instance(pair, Scenario::O1, seed)?;
    let o2 = build_reduction_instance(pair, if null { Scenario::O1 } else { Scenario::O2 }, seed)?;
    let arms = [(o1.population.clone(), o1.pair()?), (o2.population.clone(), o2.pair()?)];
    let mut rows = Vec::with_capacity(m_values.len());
    for (mi, &m) in m_values.iter().enumerate() {
        if m < k {
            return Err(usage(format!("m = {m} is below the estimator order {k}")));
        }
        let plan = PlanParameters::explicit(k, m, m)?;
        let mut results = Vec::with_capacity(2);
        for (arm, (population, pair)) in arms.iter().enumerate() {
            let offset = ((mi * 2 + arm) * trials) as u64;
            let config = TrialConfig {
                population: population.clone(),
                pair: pair.clone(),
                mode: TrialMode::TwoStage(plan),
                trials,
                base_seed: seed.wrapping_add(offset),
                error: ErrorFunctional::AbsVsMu { budget: f64::INFINITY },
            };
            results.push(trial_estimates(&config)?);
        }
        let (m1, v1) = mean_var(&results[0]);
        let (m2, v2) = mean_var(&results[1]);
        rows.push(DistinguishRow {
            m,
            k,
            mean_estimate_o1: m1,
            mean_estimate_o2: m2,
            var_o1: v1,
            var_o2: v2,
            separation_z: separation_z(&results[0], &results[1]),
        });
    }
    Ok(rows)
}

/// Checks the exact bias of every order against its bound; used by the
/// bias-decay sweep to flag violations.
pub fn bias_rows_within_bound(pop: &Population, pair: &PerturbedPair, rows: &[BiasRow]) -> AppResult<bool> {
    for row in rows {
        let b = bias_bound(pop, pair.nominal(), pair.gamma(), row.k, 0.0)?;
        if row.exact_bias > b + 1e-12 * b.max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Serializes rows as CSV with a header line.
pub fn to_csv<T: Serialize>(rows: &[T]) -> AppResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer.serialize(row).map_err(|e| usage(format!("csv: {e}")))?;
    }
    writer.into_inner().map_err(|e| usage(format!("csv: {e}")))
}

/// Serializes rows as pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> AppResult<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| usage(format!("json: {e}")))?;
    out.push(b'\n');
    Ok(out)
}
