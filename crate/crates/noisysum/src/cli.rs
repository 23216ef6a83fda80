//! Command-line front end.
//!
//! Exit codes: 0 success, 1 a checked property failed, 2 bad flags or input,
//! 3 a well-formed request that is infeasible (plan, budget, sample supply).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use noisysum_core::estimators::{estimate_sum, two_stage_from_batches, PlanParameters};
use noisysum_core::identities::run_identity_suite;
use noisysum_core::moments::{
    construct_pair, realize_integer_counts, support_gap_closed_form, PairCheck, RoundingMode,
};
use noisysum_core::oracle::{ExactMoments, OutcomeTable, PartialSum};
use noisysum_core::{
    improved_estimate_sum, make_perturbed, plan_parameters, population_stats, AliasTable, Distribution,
    EstimatorReport, PerturbedPair, Population, SampleBatch,
};

use crate::error::{infeasible, usage, AppError, AppResult};
use crate::harness::{
    bias_decay_sweep, bias_rows_within_bound, distinguishability_experiment, run_trials, to_csv, to_json,
    uniform_worst_case, zero_one_experiment, ErrorFunctional, TrialConfig, TrialMode, TrialRow, ZeroOneParams,
};
use crate::io::{
    parse_f64_list, parse_rational, parse_usize_list, read_population, read_samples, write_output, SpectrumJson,
};

/// Largest residual the identity check accepts.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "noisysum", version, about = "Sum estimation from samples of an imperfectly known distribution")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "NOISYSUM_THREADS")]
    pub threads: Option<usize>,
}

/// Population given inline over a uniform nominal distribution.
#[derive(Debug, Args, Clone)]
pub struct InlinePopulation {
    /// Population file (CSV `index,x[,p][,q]` or JSON).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated values, uniform nominal distribution.
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<String>,
    /// Comma-separated relative deviations `Q(i)/P(i) - 1` for `--x`.
    #[arg(long, allow_hyphen_values = true)]
    pub deviations: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct PlanArgs {
    /// Closeness of the true distribution to the nominal one.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Target relative bias; picks the order `k`.
    #[arg(long)]
    pub eps1: Option<f64>,
    /// Additive error target; sizes the main stage.
    #[arg(long)]
    pub eps2: Option<f64>,
    /// Estimator order; overrides the plan.
    #[arg(long)]
    pub k: Option<usize>,
    /// Main-stage sample count; overrides the plan.
    #[arg(long)]
    pub m: Option<usize>,
    /// Pilot sample count; overrides the plan.
    #[arg(long)]
    pub t: Option<usize>,
    /// Constant in the main-stage sample size.
    #[arg(long, default_value_t = PlanParameters::DEFAULT_C_M)]
    pub cm: f64,
    /// Constant in the pilot sample size.
    #[arg(long, default_value_t = PlanParameters::DEFAULT_C_T)]
    pub ct: f64,
    /// Bound on the Hansen-Hurwitz variance; computed from the population when absent.
    #[arg(long)]
    pub v: Option<f64>,
    /// Fixed pilot value; skips the pilot stage.
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Trials,
    BiasDecay,
    ZeroOne,
    Distinguish,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ErrorKind {
    Abs,
    Thm21,
    Corollary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Realize {
    None,
    Nearest,
    Exact,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the sum of a population file.
    Estimate {
        #[command(flatten)]
        pop: InlinePopulation,
        #[command(flatten)]
        plan: PlanArgs,
        /// Pre-drawn 1-based indices: the first t feed the pilot, the next m the main stage.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment.
    Simulate {
        #[arg(long, value_enum, default_value_t = Experiment::Trials)]
        experiment: Experiment,
        #[command(flatten)]
        pop: InlinePopulation,
        #[command(flatten)]
        plan: PlanArgs,
        /// Number of independent trials.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Error budget a trial must meet to count as a success.
        #[arg(long, value_enum, default_value_t = ErrorKind::Thm21)]
        error: ErrorKind,
        /// Absolute error budget for `--error abs`.
        #[arg(long)]
        budget: Option<f64>,
        /// Accuracy for `zero-one` and `--error corollary`.
        #[arg(long)]
        eps: Option<f64>,
        /// Population size for `zero-one`.
        #[arg(long)]
        n: Option<usize>,
        /// Share of ones in the `zero-one` population.
        #[arg(long, default_value_t = 0.5)]
        fraction_ones: f64,
        /// Largest order for `bias-decay`.
        #[arg(long, default_value_t = 6)]
        kmax: usize,
        /// Scale of the moment-matched construction for `distinguish`.
        #[arg(long)]
        n0: Option<u64>,
        /// Closeness for `distinguish`, as a fraction such as `1/4`.
        #[arg(long)]
        gamma_exact: Option<String>,
        /// Comma-separated sample sizes for `distinguish`.
        #[arg(long)]
        m_range: Option<String>,
        /// Feed scenario one to both arms of `distinguish`.
        #[arg(long)]
        null: bool,
    },
    /// Exact moments of an estimator by full enumeration.
    Oracle {
        #[command(flatten)]
        pop: InlinePopulation,
        /// Closeness bound; defaults to the largest observed deviation.
        #[arg(long)]
        gamma: Option<f64>,
        /// Estimator order.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Sample count.
        #[arg(long)]
        m: usize,
        /// Pilot value the estimator is centred on.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        w: f64,
        /// Report the single collision term of this order instead.
        #[arg(long)]
        h: Option<usize>,
        /// Refuse to enumerate more sample sequences than this.
        #[arg(long, default_value_t = noisysum_core::oracle::DEFAULT_BUDGET)]
        max_outcomes: u128,
    },
    /// Validate the combinatorial identities.
    Identities {
        /// Largest order checked.
        #[arg(long, default_value_t = 20)]
        kmax: usize,
    },
    /// Build the moment-matched pair of distributions.
    Lowerbound {
        /// Order of moments to match.
        #[arg(long)]
        k: usize,
        /// Closeness as an exact fraction or decimal, e.g. `1/2`.
        #[arg(long)]
        gamma: String,
        /// Scale of the construction.
        #[arg(long)]
        n0: u64,
        /// Round the level counts to whole points.
        #[arg(long, value_enum, default_value_t = Realize::None)]
        realize: Realize,
    },
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    let threads = match cli.common.threads {
        Some(0) => return Err(usage("--threads must be positive")),
        Some(t) => t,
        None => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.common, cli.command))
}

fn dispatch(common: &Common, command: Command) -> AppResult<()> {
    let (bytes, violation) = match command {
        Command::Estimate { pop, plan, samples } => (cmd_estimate(common, &pop, &plan, samples)?, None),
        Command::Simulate {
            experiment,
            pop,
            plan,
            trials,
            error,
            budget,
            eps,
            n,
            fraction_ones,
            kmax,
            n0,
            gamma_exact,
            m_range,
            null,
        } => match experiment {
            Experiment::Trials => (cmd_trials(common, &pop, &plan, trials, error, budget, eps)?, None),
            Experiment::BiasDecay => cmd_bias_decay(common, &pop, plan.gamma, kmax)?,
            Experiment::ZeroOne => {
                let params = ZeroOneParams {
                    n: n.ok_or_else(|| usage("zero-one needs --n"))?,
                    fraction_ones,
                    gamma: plan.gamma.ok_or_else(|| usage("zero-one needs --gamma"))?,
                    eps: eps.ok_or_else(|| usage("zero-one needs --eps"))?,
                    trials,
                    c_m: plan.cm,
                    c_t: plan.ct,
                    seed: common.seed,
                };
                let (config, stats) = zero_one_experiment(&params)?;
                let row = TrialRow::new("zero-one", &config, &stats, Some(params.eps), None);
                (render_rows(common, Format::Csv, &[row])?, None)
            }
            Experiment::Distinguish => {
                let k = plan.k.ok_or_else(|| usage("distinguish needs --k"))?;
                let gamma = parse_rational(&gamma_exact.ok_or_else(|| usage("distinguish needs --gamma-exact"))?)?;
                let n0 = n0.ok_or_else(|| usage("distinguish needs --n0"))?;
                let ms = parse_usize_list(&m_range.ok_or_else(|| usage("distinguish needs --m-range"))?)?;
                let pair = construct_pair(k, &gamma, n0)?;
                let realized = realize_integer_counts(&pair, RoundingMode::Nearest)?;
                let rows = distinguishability_experiment(&realized, &ms, trials, common.seed, null)?;
                (render_rows(common, Format::Csv, &rows)?, None)
            }
        },
        Command::Oracle { pop, gamma, k, m, w, h, max_outcomes } => {
            (cmd_oracle(common, &pop, gamma, k, m, w, h, max_outcomes)?, None)
        }
        Command::Identities { kmax } => {
            let summary = run_identity_suite(kmax, common.seed)?;
            let ok = summary.passes(IDENTITY_TOL);
            eprintln!("max residual {:e}, binomial mismatches {}", summary.max_residual(), summary.binomial_mismatches);
            let violation = (!ok).then(|| format!("identity residual {:e} exceeds {IDENTITY_TOL:e}", summary.max_residual()));
            (render(common, Format::Json, &summary)?, violation)
        }
        Command::Lowerbound { k, gamma, n0, realize } => cmd_lowerbound(common, k, &gamma, n0, realize)?,
    };
    write_output(common.output.as_deref(), &bytes)?;
    match violation {
        Some(msg) => Err(AppError::Violation(msg)),
        None => Ok(()),
    }
}

fn render<T: Serialize + ?Sized>(common: &Common, default: Format, rows: &T) -> AppResult<Vec<u8>> {
    match common.format.unwrap_or(default) {
        Format::Json => to_json(rows),
        Format::Csv => Err(usage("this output has no CSV form; use --format json")),
    }
}

fn render_rows<T: Serialize>(common: &Common, default: Format, rows: &[T]) -> AppResult<Vec<u8>> {
    match common.format.unwrap_or(default) {
        Format::Json => to_json(rows),
        Format::Csv => to_csv(rows),
    }
}

/// Population, nominal and optional true distribution from either source.
fn load_population(src: &InlinePopulation) -> AppResult<(Population, Distribution, Option<Distribution>)> {
    match (&src.input, &src.x) {
        (Some(_), Some(_)) => Err(usage("give either --input or --x, not both")),
        (Some(path), None) => {
            if src.deviations.is_some() {
                return Err(usage("--deviations only applies to --x"));
            }
            let input = read_population(path)?;
            Ok((input.population, input.nominal, input.true_dist))
        }
        (None, Some(x)) => {
            let pop = Population::new(parse_f64_list(x)?)?;
            let p = Distribution::uniform(pop.len())?;
            let q = match &src.deviations {
                Some(d) => {
                    let d = parse_f64_list(d)?;
                    let g = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    Some(make_perturbed(&p, &d, g)?.true_dist().clone())
                }
                None => None,
            };
            Ok((pop, p, q))
        }
        (None, None) => Err(usage("no population: give --input FILE or --x VALUES")),
    }
}

/// Pairs `P` with `Q`, taking `gamma` as the largest observed deviation when
/// no bound is supplied.
fn pair_of(p: Distribution, q: Distribution, gamma: Option<f64>) -> AppResult<PerturbedPair> {
    let observed = p.probs().iter().zip(q.probs()).fold(0.0f64, |a, (&p, &q)| a.max((q / p - 1.0).abs()));
    let g = gamma.unwrap_or(observed * (1.0 + 1e-12));
    Ok(PerturbedPair::from_distributions(p, q, g)?)
}

fn resolve_plan(plan: &PlanArgs, pop: &Population, nominal: &Distribution) -> AppResult<PlanParameters> {
    if let (Some(k), Some(m)) = (plan.k, plan.m) {
        let t = match (plan.t, plan.w) {
            (Some(t), _) => t,
            (None, Some(_)) => 1,
            (None, None) => return Err(usage("an explicit plan needs --t (or a fixed pilot --w)")),
        };
        return Ok(PlanParameters::explicit(k, m, t)?);
    }
    let (Some(gamma), Some(eps1), Some(eps2)) = (plan.gamma, plan.eps1, plan.eps2) else {
        return Err(usage("give either --k, --m and --t, or --gamma, --eps1 and --eps2"));
    };
    let v = match plan.v {
        Some(v) => v,
        None => population_stats(pop, nominal)?.var_hh,
    };
    Ok(plan_parameters(gamma, eps1, eps2, nominal.n_tilde()?, v, plan.cm, plan.ct)?)
}

fn cmd_estimate(common: &Common, src: &InlinePopulation, args: &PlanArgs, samples: Option<PathBuf>) -> AppResult<Vec<u8>> {
    let (pop, nominal, true_dist) = load_population(src)?;
    let plan = resolve_plan(args, &pop, &nominal)?;
    let report: EstimatorReport = match (samples, true_dist) {
        (Some(path), _) => {
            let idx = read_samples(&path, pop.len())?;
            match args.w {
                Some(w) => {
                    if idx.len() < plan.m {
                        return Err(infeasible(format!("{} samples supplied, {} needed", idx.len(), plan.m)));
                    }
                    estimate_sum(&SampleBatch::new(idx[..plan.m].to_vec(), common.seed)?, plan.k, w, &pop, &nominal)?
                }
                None => {
                    let need = plan.t + plan.m;
                    if idx.len() < need {
                        return Err(infeasible(format!("{} samples supplied, {need} needed (t + m)", idx.len())));
                    }
                    let pilot = SampleBatch::new(idx[..plan.t].to_vec(), common.seed)?;
                    let main = SampleBatch::new(idx[plan.t..need].to_vec(), common.seed)?;
                    let mut r = two_stage_from_batches(&pilot, &main, plan.k, &pop, &nominal)?;
                    r.seed = None;
                    r
                }
            }
        }
        (None, Some(q)) => {
            let table = AliasTable::new(&q);
            match args.w {
                Some(w) => estimate_sum(&table.draw_batch(plan.m, common.seed)?, plan.k, w, &pop, &nominal)?,
                None => improved_estimate_sum(&table, &plan, &pop, &nominal, common.seed)?,
            }
        }
        (None, None) => {
            return Err(infeasible(
                "no sampler source: add a `q` column to the population file or pass pre-drawn indices with --samples",
            ))
        }
    };
    render(common, Format::Json, &report)
}

fn cmd_trials(
    common: &Common,
    src: &InlinePopulation,
    args: &PlanArgs,
    trials: usize,
    error: ErrorKind,
    budget: Option<f64>,
    eps: Option<f64>,
) -> AppResult<Vec<u8>> {
    let (pop, nominal, true_dist) = load_population(src)?;
    let q = true_dist.ok_or_else(|| infeasible("simulation needs a true distribution (`q` column or --deviations)"))?;
    let pair = pair_of(nominal.clone(), q, args.gamma)?;
    let plan = resolve_plan(args, &pop, &nominal)?;
    let mode = match args.w {
        Some(w) => TrialMode::FixedPilot { k: plan.k, m: plan.m, w },
        None => TrialMode::TwoStage(plan),
    };
    let error = match error {
        ErrorKind::Abs => ErrorFunctional::AbsVsMu { budget: budget.ok_or_else(|| usage("--error abs needs --budget"))? },
        ErrorKind::Corollary => ErrorFunctional::Corollary { eps: eps.ok_or_else(|| usage("--error corollary needs --eps"))? },
        ErrorKind::Thm21 => ErrorFunctional::Thm21 {
            eps1: args.eps1.ok_or_else(|| usage("--error thm21 needs --eps1"))?,
            eps2: args.eps2.ok_or_else(|| usage("--error thm21 needs --eps2"))?,
            gamma: pair.gamma(),
        },
    };
    let config = TrialConfig { population: pop, pair, mode, trials, base_seed: common.seed, error };
    let stats = run_trials(&config)?;
    let row = TrialRow::new("trials", &config, &stats, args.eps1, args.eps2);
    render_rows(common, Format::Csv, &[row])
}

fn cmd_bias_decay(
    common: &Common,
    src: &InlinePopulation,
    gamma: Option<f64>,
    kmax: usize,
) -> AppResult<(Vec<u8>, Option<String>)> {
    let (pop, nominal, _) = load_population(src)?;
    let gamma = gamma.ok_or_else(|| usage("bias-decay needs --gamma"))?;
    if nominal != Distribution::uniform(pop.len())? {
        return Err(infeasible("bias-decay builds its worst-case pair over a uniform nominal distribution"));
    }
    let pair = uniform_worst_case(&pop, gamma)?;
    let ks: Vec<usize> = (1..=kmax).collect();
    let rows = bias_decay_sweep(&pop, &pair, &ks)?;
    let violation = (!bias_rows_within_bound(&pop, &pair, &rows)?).then(|| "exact bias exceeds its bound".to_string());
    Ok((render_rows(common, Format::Csv, &rows)?, violation))
}

#[allow(clippy::too_many_arguments)]
fn cmd_oracle(
    common: &Common,
    src: &InlinePopulation,
    gamma: Option<f64>,
    k: usize,
    m: usize,
    w: f64,
    h: Option<usize>,
    max_outcomes: u128,
) -> AppResult<Vec<u8>> {
    let (pop, nominal, true_dist) = load_population(src)?;
    let q = true_dist.unwrap_or_else(|| nominal.clone());
    let pair = pair_of(nominal, q, gamma)?;
    let table = match h {
        Some(h) => OutcomeTable::xi(&pop, &pair, h, m, w)?,
        None => OutcomeTable::estimator(&pop, &pair, k, m, w)?,
    };
    let outcome_count = table.outcome_count(max_outcomes)?;
    let merge = |parts: Vec<PartialSum>| {
        parts.iter().fold(PartialSum::default(), |mut acc, p| {
            acc.merge(p);
            acc
        })
    };
    let first = merge((0..table.n()).into_par_iter().map(|lead| table.partial(lead, |v| v)).collect());
    let mean = first.weighted.value() / first.mass.value();
    let second = merge(
        (0..table.n())
            .into_par_iter()
            .map(|lead| table.partial(lead, |v| (v - mean) * (v - mean)))
            .collect(),
    );
    let moments = ExactMoments {
        expectation: mean,
        variance: (second.weighted.value() / second.mass.value()).max(0.0),
        outcome_count,
        total_prob: first.mass.value(),
    };
    render(common, Format::Json, &moments)
}

#[derive(Debug, Serialize)]
struct MomentRow {
    ell: usize,
    d1: String,
    d2: String,
    d1_approx: f64,
    d2_approx: f64,
    equal: bool,
}

#[derive(Debug, Serialize)]
struct LowerBoundReport {
    k: usize,
    gamma: String,
    n0: u64,
    n1: String,
    n2: String,
    gap: String,
    gap_closed_form: String,
    check: PairCheck,
    d1: SpectrumJson,
    d2: SpectrumJson,
    moments: Vec<MomentRow>,
    realized: Option<RealizedReport>,
}

#[derive(Debug, Serialize)]
struct RealizedReport {
    n1: u64,
    n2: u64,
    gap: i64,
    moment_error: f64,
    d1: SpectrumJson,
    d2: SpectrumJson,
}

fn cmd_lowerbound(common: &Common, k: usize, gamma: &str, n0: u64, realize: Realize) -> AppResult<(Vec<u8>, Option<String>)> {
    let gamma = parse_rational(gamma)?;
    let pair = construct_pair(k, &gamma, n0)?;
    let check = pair.check();
    let moments: Vec<MomentRow> = (1..=k + 1)
        .map(|ell| {
            let a = pair.d1.frequency_moment(ell);
            let b = pair.d2.frequency_moment(ell);
            MomentRow {
                ell,
                d1_approx: a.to_f64().unwrap_or(f64::NAN),
                d2_approx: b.to_f64().unwrap_or(f64::NAN),
                equal: a == b,
                d1: a.to_string(),
                d2: b.to_string(),
            }
        })
        .collect();
    let realized = match realize {
        Realize::None => None,
        Realize::Nearest | Realize::Exact => {
            let mode = if realize == Realize::Exact { RoundingMode::Exact } else { RoundingMode::Nearest };
            let r = realize_integer_counts(&pair, mode)?;
            Some(RealizedReport {
                n1: r.n1(),
                n2: r.n2(),
                gap: r.gap(),
                moment_error: r.moment_error,
                d1: SpectrumJson::from_realized(&r.d1)?,
                d2: SpectrumJson::from_realized(&r.d2)?,
            })
        }
    };
    let violation = (!check.all()).then(|| format!("construction check failed: {check:?}"));
    let bytes = match common.format.unwrap_or(Format::Json) {
        Format::Csv => to_csv(&moments)?,
        Format::Json => to_json(&LowerBoundReport {
            k,
            gamma: gamma.to_string(),
            n0,
            n1: pair.n1.to_string(),
            n2: pair.n2.to_string(),
            gap: pair.gap.to_string(),
            gap_closed_form: support_gap_closed_form(k, &gamma, n0)?.to_string(),
            check,
            d1: SpectrumJson::from_spectrum(&pair.d1)?,
            d2: SpectrumJson::from_spectrum(&pair.d2)?,
            moments,
            realized,
        })?,
    };
    Ok((bytes, violation))
}
