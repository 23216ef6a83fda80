//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use noisysum::harness::{
    bias_decay_sweep, distinguishability_experiment, uniform_worst_case, zero_one_experiment, ZeroOneParams,
};
use noisysum_core::identities::{binomial_collision_expected, binomial_collision_identity, run_identity_suite};
use noisysum_core::moments::{construct_pair, ratio, realize_integer_counts, support_gap_closed_form, RoundingMode};
use noisysum_core::oracle::{exact_estimator_moments, DEFAULT_BUDGET};
use noisysum_core::sampler::{rng_from_seed, uniform_index, uniform_unit, SampleRng};
use noisysum_core::{
    bias_bound, closed_form_expectation, make_perturbed, population_stats, variance_bound, worst_case_pair,
    Distribution, PerturbedPair, Population,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_instance(rng: &mut SampleRng, n: usize) -> (Population, PerturbedPair) {
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + uniform_unit(rng)).collect();
    let total: f64 = raw.iter().sum();
    let p = Distribution::new(raw.iter().map(|r| r / total).collect()).unwrap();
    let gamma = 0.95 * uniform_unit(rng);
    let mut d: Vec<f64> = (0..n).map(|_| 2.0 * uniform_unit(rng) - 1.0).collect();
    let mean: f64 = d.iter().zip(p.probs()).map(|(a, b)| a * b).sum();
    d.iter_mut().for_each(|v| *v -= mean);
    let peak = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let scale = if peak > 0.0 { gamma / peak } else { 0.0 };
    let d: Vec<f64> = d.iter().map(|v| (v * scale).clamp(-gamma, gamma)).collect();
    let x = (0..n).map(|_| 10.0 * uniform_unit(rng) - 5.0).collect();
    (Population::new(x).unwrap(), make_perturbed(&p, &d, gamma).unwrap())
}

fn ac1() -> Outcome {
    let mut rng = rng_from_seed(1);
    let mut violations = 0;
    let mut cases = 0;
    for _ in 0..1000 {
        let n = 1 + uniform_index(&mut rng, 20);
        let (pop, pair) = random_instance(&mut rng, n);
        let w = pop.sum() * uniform_unit(&mut rng);
        for k in 1..=5 {
            for w in [0.0, w] {
                let e = closed_form_expectation(&pop, &pair, k, w).unwrap();
                let abs_xbar: f64 = pop.centered(pair.nominal(), w).iter().map(|v| v.abs()).sum();
                let stated = pair.gamma().powi(k as i32) * abs_xbar;
                let refined = bias_bound(&pop, pair.nominal(), pair.gamma(), k, w).unwrap();
                let dev = (e - pop.sum()).abs();
                if dev > stated + 1e-12 * stated.max(1.0) || dev > refined + 1e-12 * refined.max(1.0) {
                    violations += 1;
                }
                cases += 1;
            }
        }
    }
    // x = (1, 0) saturates every order; x = (1, 1) saturates the even ones
    let p = Distribution::uniform(2).unwrap();
    let mut worst_gap = 0.0f64;
    let mut odd_constant = Vec::new();
    for gamma in [0.1, 0.5, 0.9] {
        let pair = worst_case_pair(&p, gamma, &[0]).unwrap();
        for k in 1..=5 {
            let one_hot = Population::new(vec![1.0, 0.0]).unwrap();
            let bias = (closed_form_expectation(&one_hot, &pair, k, 0.0).unwrap() - 1.0).abs();
            worst_gap = worst_gap.max((bias - gamma.powi(k as i32)).abs());
            let constant = Population::new(vec![1.0, 1.0]).unwrap();
            let bias = (closed_form_expectation(&constant, &pair, k, 0.0).unwrap() - 2.0).abs();
            if k % 2 == 0 {
                worst_gap = worst_gap.max((bias - 2.0 * gamma.powi(k as i32)).abs());
            } else {
                odd_constant.push(bias);
            }
        }
    }
    let odd_max = odd_constant.iter().fold(0.0f64, |a, &b| a.max(b));
    outcome(
        violations == 0 && worst_gap <= 1e-12,
        format!(
            "{cases} cases, {violations} violations; saturation gap {worst_gap:.1e} \
             (x=(1,0) all k, x=(1,1) even k; x=(1,1) odd-k bias {odd_max:.1e})"
        ),
    )
}

fn ac2() -> Outcome {
    let mut rng = rng_from_seed(2);
    let mut worst_rel = 0.0f64;
    let mut var_violations = 0;
    let mut cases = 0;
    for n in 1..=3 {
        for _ in 0..5 {
            let (pop, pair) = random_instance(&mut rng, n);
            let mu = pop.sum();
            for m in 1..=6 {
                for k in 1..=m {
                    for w in [0.0, 0.5 * mu, mu] {
                        let exact = exact_estimator_moments(&pop, &pair, k, m, w, DEFAULT_BUDGET).unwrap();
                        let closed = closed_form_expectation(&pop, &pair, k, w).unwrap();
                        worst_rel = worst_rel.max((exact.expectation - closed).abs() / closed.abs().max(1.0));
                        let vb = variance_bound(&pop, pair.nominal(), pair.gamma(), k, m, w).unwrap();
                        if exact.variance > vb * (1.0 + 1e-9) + 1e-12 {
                            var_violations += 1;
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    outcome(
        worst_rel <= 1e-9 && var_violations == 0,
        format!("{cases} cases, max relative gap {worst_rel:.1e}, {var_violations} variance-bound violations"),
    )
}

fn ac3() -> Outcome {
    let pop = Population::new(vec![1.0, 0.0]).unwrap();
    let p = Distribution::uniform(2).unwrap();
    let pair = make_perturbed(&p, &[0.0, 0.0], 0.0).unwrap();
    let exact = exact_estimator_moments(&pop, &pair, 1, 2, 0.0, DEFAULT_BUDGET).unwrap();
    let hh = population_stats(&pop, &p).unwrap().var_hh / 2.0;
    outcome(
        (exact.variance - 0.5).abs() <= 1e-12 && (exact.variance - hh).abs() <= 1e-12,
        format!("variance {}, Var_HH/m {}", exact.variance, hh),
    )
}

fn ac4() -> Outcome {
    let mut mismatches = 0;
    for k in 1..=32 {
        for j in 0..=k {
            if binomial_collision_identity(k, j).unwrap() != binomial_collision_expected(k, j) {
                mismatches += 1;
            }
        }
    }
    let s = run_identity_suite(20, 4).unwrap();
    outcome(
        mismatches == 0 && s.passes(1e-9),
        format!(
            "binomial mismatches {mismatches} (k <= 32); bias {:.1e}, product {:.1e}, expression {:.1e}",
            s.bias_max_residual, s.prod_max_residual, s.expression_max_residual
        ),
    )
}

fn ac5() -> Outcome {
    let mut failures = Vec::new();
    let mut cases = 0;
    for k in 1..=8 {
        for g in [ratio(1, 10), ratio(1, 4), ratio(1, 2)] {
            for n0 in [1_000u64, 10_000] {
                let pair = construct_pair(k, &g, n0).unwrap();
                if !pair.check().all() {
                    failures.push(format!("k={k} gamma={g} n0={n0}"));
                }
                cases += 1;
            }
        }
    }
    let spot = construct_pair(2, &ratio(1, 2), 60).unwrap();
    let spot_ok = spot.gap == ratio(2, 1) && support_gap_closed_form(2, &ratio(1, 2), 60).unwrap() == ratio(2, 1);
    outcome(
        failures.is_empty() && spot_ok,
        format!("{cases} exact constructions, failures {failures:?}; k=2 gamma=1/2 n0=60 gap {}", spot.gap),
    )
}

fn ac6() -> Outcome {
    let trials = 2000;
    let params = ZeroOneParams {
        n: 10_000,
        fraction_ones: 0.5,
        gamma: 0.5,
        eps: 0.25,
        trials,
        c_m: 4.0,
        c_t: 16.0,
        seed: 6,
    };
    let (config, stats) = zero_one_experiment(&params).unwrap();
    let threshold = 2.0 / 3.0 - 3.0 * (2.0 / (9.0 * trials as f64)).sqrt();
    let sizes = (config.mode.k(), config.mode.m(), config.mode.t());
    let success_ok = stats.success_rate >= threshold && sizes.0 == 2 && sizes.1 == 1600;

    let pair = construct_pair(2, &ratio(1, 2), 300).unwrap();
    let realized = realize_integer_counts(&pair, RoundingMode::Nearest).unwrap();
    let ms = [256, 512, 1024, 2048];
    let rows = distinguishability_experiment(&realized, &ms, 1000, 60, false).unwrap();
    let zs: Vec<f64> = rows.iter().map(|r| r.separation_z).collect();
    let monotone = zs.windows(2).all(|w| w[1] >= w[0]);
    let null = distinguishability_experiment(&realized, &[512], 1000, 61, true).unwrap();
    let null_z = null[0].separation_z;
    let zs_text: Vec<String> = zs.iter().map(|z| format!("{z:.2}")).collect();
    outcome(
        success_ok && monotone && null_z < 3.0,
        format!(
            "(k, m, t) = {sizes:?}, success {:.4} vs threshold {threshold:.4}; \
             z over m={ms:?}: [{}], null z {null_z:.2}",
            stats.success_rate,
            zs_text.join(", ")
        ),
    )
}

fn ac7() -> Outcome {
    let pop = Population::new(vec![1.0, 0.0]).unwrap();
    let pair = uniform_worst_case(&pop, 0.5).unwrap();
    let rows = bias_decay_sweep(&pop, &pair, &[1, 2, 3, 4, 5, 6]).unwrap();
    let mu_plus = pop.abs_sum();
    let mut worst = 0.0f64;
    let mut values = Vec::new();
    for r in &rows {
        let measured = r.exact_bias / mu_plus;
        worst = worst.max((measured - 0.5f64.powi(r.k as i32)).abs());
        values.push(format!("{measured}"));
    }
    outcome(worst <= 1e-12, format!("bias/mu_+ = [{}], max error {worst:.1e}", values.join(", ")))
}

fn ac8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let pop_file = dir.path().join("pop.csv");
    fs::write(&pop_file, "index,x,p,q\n1,1,0.25,0.3\n2,0,0.25,0.2\n3,2,0.5,0.5\n").unwrap();
    let pop = pop_file.to_str().unwrap().to_string();
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("estimate", args(&["estimate", "--input", &pop, "--gamma", "0.2", "--eps1", "0.04", "--eps2", "0.5"])),
        ("simulate trials", args(&["simulate", "--input", &pop, "--k", "2", "--m", "40", "--t", "20", "--trials", "300", "--eps1", "0.1", "--eps2", "0.5"])),
        ("simulate zero-one", args(&["simulate", "--experiment", "zero-one", "--n", "400", "--gamma", "0.5", "--eps", "0.25", "--trials", "200"])),
        ("simulate distinguish", args(&["simulate", "--experiment", "distinguish", "--k", "1", "--gamma-exact", "1/2", "--n0", "30", "--m-range", "8,32", "--trials", "40"])),
        ("simulate bias-decay", args(&["simulate", "--experiment", "bias-decay", "--x", "1,0,2,0", "--gamma", "0.3"])),
        ("oracle", args(&["oracle", "--input", &pop, "--k", "2", "--m", "6", "--w", "1.5"])),
        ("identities", args(&["identities", "--kmax", "12"])),
        ("lowerbound", args(&["lowerbound", "--k", "3", "--gamma", "1/4", "--n0", "1000", "--realize", "nearest"])),
    ];
    let mut failures = Vec::new();
    for (name, a) in &runs {
        let mut outputs = Vec::new();
        for (rep, threads) in ["1", "8", "1", "8"].iter().enumerate() {
            let out_path = dir.path().join(format!("out-{rep}"));
            let status = Command::new(env!("CARGO_BIN_EXE_noisysum"))
                .args(a)
                .args(["--seed", "5", "--threads", threads, "--output", out_path.to_str().unwrap()])
                .env_remove("NOISYSUM_THREADS")
                .stderr(Stdio::null())
                .status()
                .unwrap();
            if !status.success() {
                failures.push(format!("{name}: exit {:?}", status.code()));
                break;
            }
            outputs.push(fs::read(&out_path).unwrap());
        }
        if outputs.len() == 4 && outputs.windows(2).any(|w| w[0] != w[1]) {
            failures.push(format!("{name}: outputs differ"));
        }
    }
    outcome(
        failures.is_empty(),
        format!("{} subcommand configurations, threads 1 and 8, failures {failures:?}", runs.len()),
    )
}

fn args(a: &[&str]) -> Vec<String> {
    a.iter().map(|s| s.to_string()).collect()
}

type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("AC1", "exact bias law", Duration::from_secs(10), ac1),
        ("AC2", "oracle equivalence and variance bound", Duration::from_secs(60), ac2),
        ("AC3", "Hansen-Hurwitz ground truth", Duration::from_secs(10), ac3),
        ("AC4", "identity suite", Duration::from_secs(30), ac4),
        ("AC5", "moment-matched construction", Duration::from_secs(5), ac5),
        ("AC6", "zero-one success rate and distinguishability trend", Duration::from_secs(300), ac6),
        ("AC7", "bias-decay sweep", Duration::from_secs(10), ac7),
        ("AC8", "CLI determinism", Duration::from_secs(300), ac8),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {id} {name}: {} ({:.2} s, limit {} s)",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
