//! Validators for the combinatorial identities behind the estimators.
//!
//! Integer identities are evaluated exactly. Real-valued ones are evaluated
//! on both sides in double-double arithmetic and compared through the
//! relative residual `|lhs - rhs| / max(1, |lhs|, |rhs|)`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::math::{binom_u128, DoubleDouble as Dd};
use crate::sampler::{rng_from_seed, uniform_index, uniform_unit, SampleRng};
use crate::MAX_ORDER;

/// Maximum set size for [`prod_mean_zero_residual`].
pub const MAX_PRODUCT_SET: usize = 20;
/// Maximum sample count for [`expression_mean_zero_residual`].
pub const MAX_EXPRESSION_SET: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

impl IdentityResidual {
    fn from_dd(lhs: Dd, rhs: Dd) -> Self {
        let scale = lhs.abs().to_f64().max(rhs.abs().to_f64()).max(1.0);
        let residual = (lhs - rhs).abs().to_f64() / scale;
        IdentityResidual { lhs: lhs.to_f64(), rhs: rhs.to_f64(), residual }
    }
}

fn binom_i128(n: usize, k: usize) -> i128 {
    // n <= 32 keeps every coefficient far inside i128
    binom_u128(n as u64, k as u64).expect("small binomial") as i128
}

/// `sum_{h=1..k} (-1)^(h+1) C(k, h) C(h, j)`, exactly.
pub fn binomial_collision_identity(k: usize, j: usize) -> Result<i128> {
    if k == 0 || k > MAX_ORDER {
        return Err(invalid!("k = {k} must lie in 1..={MAX_ORDER}"));
    }
    if j > k {
        return Err(invalid!("j = {j} must lie in 0..={k}"));
    }
    Ok((1..=k)
        .map(|h| {
            let term = binom_i128(k, h) * binom_i128(h, j);
            if h % 2 == 1 {
                term
            } else {
                -term
            }
        })
        .sum())
}

/// The case split the collision identity must equal: 1 at `j = 0`,
/// `(-1)^(k+1)` at `j = k`, zero in between.
pub fn binomial_collision_expected(k: usize, j: usize) -> i128 {
    if j == 0 {
        1
    } else if j == k {
        if k % 2 == 1 {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

fn signed(h: usize, x: Dd) -> Dd {
    if h.is_multiple_of(2) {
        x
    } else {
        -x
    }
}

/// `1 + (-1)^(k+1) g^k` against `sum_{h=1..k} (-1)^(h+1) C(k, h) (1 + g)^h`.
pub fn bias_identity_residual(k: usize, gamma: f64) -> Result<IdentityResidual> {
    if k == 0 || k > MAX_ORDER {
        return Err(invalid!("k = {k} must lie in 1..={MAX_ORDER}"));
    }
    let g = Dd::from(gamma);
    let lhs = Dd::ONE + signed(k + 1, g.powi(k as u32));
    let base = Dd::ONE + g;
    let mut rhs = Dd::ZERO;
    for h in 1..=k {
        let c = Dd::from(binom_i128(k, h) as f64);
        rhs = rhs + signed(h + 1, c * base.powi(h as u32));
    }
    Ok(IdentityResidual::from_dd(lhs, rhs))
}

/// Products `prod_{j in mask} values[j]` for every bitmask over `values`.
fn subset_products(values: &[Dd]) -> Vec<Dd> {
    let mut out = alloc::vec![Dd::ONE; 1usize << values.len()];
    for mask in 1..out.len() {
        let low = mask.trailing_zeros() as usize;
        out[mask] = out[mask & (mask - 1)] * values[low];
    }
    out
}

/// `prod_I b_j - (1+a)^|I|` against
/// `sum_{nonempty J in I} (1+a)^(|I|-|J|) prod_J (b_j - (1+a))`,
/// both by explicit subset enumeration.
pub fn prod_mean_zero_residual(betas: &[f64], alpha: f64) -> Result<IdentityResidual> {
    let n = betas.len();
    if n > MAX_PRODUCT_SET {
        return Err(invalid!("{n} betas exceed the enumeration cap of {MAX_PRODUCT_SET}"));
    }
    let base = Dd::ONE + Dd::from(alpha);
    let b: Vec<Dd> = betas.iter().map(|&x| Dd::from(x)).collect();
    let shifted: Vec<Dd> = b.iter().map(|&x| x - base).collect();
    let full = (1usize << n) - 1;
    let lhs = b.iter().fold(Dd::ONE, |acc, &x| acc * x) - base.powi(n as u32);
    let shifted_products = subset_products(&shifted);
    let base_powers: Vec<Dd> = (0..=n).map(|e| base.powi(e as u32)).collect();
    let mut rhs = Dd::ZERO;
    for (mask, &prod) in shifted_products.iter().enumerate().take(full + 1).skip(1) {
        let size = (mask as u32).count_ones() as usize;
        rhs = rhs + base_powers[n - size] * prod;
    }
    Ok(IdentityResidual::from_dd(lhs, rhs))
}

/// Both sides of
///
/// ```text
/// sum_{0<|I|<=k} (-1)^(|I|+1) C(k,|I|)/C(m,|I|) (prod_I b_j - (1+a)^|I|)
///   = (-1)^(k+1) sum_{0<|I|<=k} C(k,|I|)/C(m,|I|) a^(k-|I|) prod_I (b_j - (1+a))
/// ```
///
/// over all subsets `I` of the `m = betas.len()` positions.
pub fn expression_mean_zero_residual(betas: &[f64], alpha: f64, k: usize) -> Result<IdentityResidual> {
    let m = betas.len();
    if m > MAX_EXPRESSION_SET {
        return Err(invalid!("m = {m} exceeds the enumeration cap of {MAX_EXPRESSION_SET}"));
    }
    if k == 0 || k > m {
        return Err(invalid!("need 1 <= k <= m, got k = {k}, m = {m}"));
    }
    let a = Dd::from(alpha);
    let base = Dd::ONE + a;
    let b: Vec<Dd> = betas.iter().map(|&x| Dd::from(x)).collect();
    let shifted: Vec<Dd> = b.iter().map(|&x| x - base).collect();
    let plain_products = subset_products(&b);
    let shifted_products = subset_products(&shifted);
    let ratios: Vec<Dd> = (0..=k)
        .map(|s| Dd::from(binom_i128(k, s) as f64).div_f64(binom_i128(m, s) as f64))
        .collect();
    let base_powers: Vec<Dd> = (0..=k).map(|e| base.powi(e as u32)).collect();
    let alpha_powers: Vec<Dd> = (0..=k).map(|e| a.powi(e as u32)).collect();
    let mut lhs = Dd::ZERO;
    let mut rhs = Dd::ZERO;
    for mask in 1usize..(1usize << m) {
        let size = mask.count_ones() as usize;
        if size > k {
            continue;
        }
        let diff = plain_products[mask] - base_powers[size];
        lhs = lhs + signed(size + 1, ratios[size] * diff);
        rhs = rhs + ratios[size] * alpha_powers[k - size] * shifted_products[mask];
    }
    Ok(IdentityResidual::from_dd(lhs, signed(k + 1, rhs)))
}

/// Maximum residuals over the standard randomized suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentitySuiteSummary {
    pub kmax: usize,
    pub binomial_cases: usize,
    pub binomial_mismatches: usize,
    pub bias_cases: usize,
    pub bias_max_residual: f64,
    pub prod_cases: usize,
    pub prod_max_residual: f64,
    pub expression_cases: usize,
    pub expression_max_residual: f64,
}

impl IdentitySuiteSummary {
    pub fn max_residual(&self) -> f64 {
        self.bias_max_residual.max(self.prod_max_residual).max(self.expression_max_residual)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.binomial_mismatches == 0 && self.max_residual() <= tol
    }
}

fn uniform_in(rng: &mut SampleRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform_unit(rng)
}

/// Fixed grid of `gamma` values checked for every order.
pub const BIAS_GAMMA_GRID: [f64; 7] = [-0.9, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9];

/// Runs every validator:
///
/// - collision identity for all `1 <= k <= kmax`, `0 <= j <= k`;
/// - bias identity for `k <= kmax` on [`BIAS_GAMMA_GRID`] plus 100 random
///   `gamma` in `(-1, 1)`;
/// - the product identity on 100 random sets of up to 8 betas;
/// - the expression identity on 200 random `(m <= 10, k <= m)` cases.
///
/// Betas are drawn from `[-2, 3]` and alphas from `(-1, 1)`.
pub fn run_identity_suite(kmax: usize, seed: u64) -> Result<IdentitySuiteSummary> {
    if kmax == 0 || kmax > MAX_ORDER {
        return Err(invalid!("kmax = {kmax} must lie in 1..={MAX_ORDER}"));
    }
    let mut rng = rng_from_seed(seed);
    let mut summary = IdentitySuiteSummary {
        kmax,
        binomial_cases: 0,
        binomial_mismatches: 0,
        bias_cases: 0,
        bias_max_residual: 0.0,
        prod_cases: 0,
        prod_max_residual: 0.0,
        expression_cases: 0,
        expression_max_residual: 0.0,
    };
    for k in 1..=kmax {
        for j in 0..=k {
            summary.binomial_cases += 1;
            if binomial_collision_identity(k, j)? != binomial_collision_expected(k, j) {
                summary.binomial_mismatches += 1;
            }
        }
    }
    let random_gammas: Vec<f64> = (0..100).map(|_| uniform_in(&mut rng, -1.0, 1.0)).collect();
    for k in 1..=kmax {
        for &g in BIAS_GAMMA_GRID.iter().chain(&random_gammas) {
            let r = bias_identity_residual(k, g)?;
            summary.bias_cases += 1;
            summary.bias_max_residual = summary.bias_max_residual.max(r.residual);
        }
    }
    for _ in 0..100 {
        let size = 1 + uniform_index(&mut rng, 8);
        let betas: Vec<f64> = (0..size).map(|_| uniform_in(&mut rng, -2.0, 3.0)).collect();
        let alpha = uniform_in(&mut rng, -1.0, 1.0);
        let r = prod_mean_zero_residual(&betas, alpha)?;
        summary.prod_cases += 1;
        summary.prod_max_residual = summary.prod_max_residual.max(r.residual);
    }
    for _ in 0..200 {
        let m = 1 + uniform_index(&mut rng, 10);
        let k = 1 + uniform_index(&mut rng, m);
        let betas: Vec<f64> = (0..m).map(|_| uniform_in(&mut rng, -2.0, 3.0)).collect();
        let alpha = uniform_in(&mut rng, -1.0, 1.0);
        let r = expression_mean_zero_residual(&betas, alpha, k)?;
        summary.expression_cases += 1;
        summary.expression_max_residual = summary.expression_max_residual.max(r.residual);
    }
    Ok(summary)
}
