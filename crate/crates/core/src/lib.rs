//! Sum estimation from samples of an imperfectly known distribution.
//!
//! Samples are drawn from an unknown distribution `Q` that is pointwise
//! `gamma`-close to a known nominal distribution `P`, meaning
//! `(1 - gamma) P(i) <= Q(i) <= (1 + gamma) P(i)` for every index. The
//! Hansen-Hurwitz estimator evaluated with `P` in place of `Q` is then biased
//! by up to `gamma * sum |x_i|`. The collision estimators in [`estimators`]
//! combine `h`-wise sample collisions so that the bias drops to
//! `gamma^k * sum |x_i|`.
//!
//! The crate is `no_std` (with `alloc`). It contains:
//!
//! - [`model`]: populations, distributions, pointwise-close perturbations.
//! - [`sampler`]: a seeded alias-table sampler.
//! - [`estimators`]: collision estimators, the two-stage estimator, the
//!   sample-size planner and closed-form bias/variance references.
//! - [`identities`]: validators for the combinatorial identities the
//!   estimators rely on.
//! - [`moments`]: an exact rational construction of two nearly uniform
//!   distributions with matching low frequency moments but different support
//!   sizes, plus the sum-estimation instances built from them.
//! - [`oracle`]: brute-force exact moments of any estimator configuration.
//!
//! Indices are 0-based throughout the library.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]
// Negated comparisons are deliberate: they reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod estimators;
pub mod identities;
pub mod math;
pub mod model;
pub mod moments;
pub mod oracle;
pub mod sampler;

pub use error::{Error, Result};
pub use estimators::{
    bias_bound, closed_form_expectation, estimate_sum, improved_estimate_sum, plan_parameters,
    variance_bound, xi_h, EstimatorReport, FrequencyVector, PlanParameters,
};
pub use model::{
    make_perturbed, population_stats, worst_case_pair, Distribution, PerturbedPair, Population,
    PopulationStats, SampleBatch,
};
pub use sampler::{draw_samples, AliasTable, SampleRng};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
struct ReadmeExamples;

/// Absolute tolerance for normalization and mass-balance checks.
pub const PROB_TOL: f64 = 1e-12;

/// Largest supported estimator order.
pub const MAX_ORDER: usize = 32;
