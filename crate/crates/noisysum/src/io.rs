//! File formats.
//!
//! Population files list one row per index, 1-based:
//!
//! ```text
//! index,x,p,q
//! 1,0.5,0.25,0.3
//! 2,1.0,0.75,0.7
//! ```
//!
//! `x` is required. `p` (nominal) defaults to uniform; `q` (true sampling
//! distribution) is only needed for simulated sampling. When `index` is
//! present every value in `1..=N` must appear exactly once; otherwise rows are
//! taken in order. The JSON form is an array of objects with the same keys.
//!
//! Sample files hold one 1-based index per line, optionally under an `index`
//! header.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use noisysum_core::moments::{MassSpectrum, RealizedSpectrum};
use noisysum_core::{Distribution, Population};

use crate::error::{usage, AppError, AppResult};

/// A parsed population file.
#[derive(Debug, Clone)]
pub struct PopulationInput {
    pub population: Population,
    pub nominal: Distribution,
    pub true_dist: Option<Distribution>,
}

#[derive(Debug, Deserialize)]
struct Row {
    index: Option<usize>,
    x: f64,
    p: Option<f64>,
    q: Option<f64>,
}

pub fn read_population(path: &Path) -> AppResult<PopulationInput> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('[');
    if is_json {
        parse_population_json(&text)
    } else {
        parse_population_csv(&text)
    }
}

pub fn parse_population_csv(text: &str) -> AppResult<PopulationInput> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (line, record) in reader.deserialize::<Row>().enumerate() {
        rows.push(record.map_err(|e| usage(format!("population row {}: {e}", line + 1)))?);
    }
    assemble(rows)
}

pub fn parse_population_json(text: &str) -> AppResult<PopulationInput> {
    let rows: Vec<Row> = serde_json::from_str(text).map_err(|e| usage(format!("population JSON: {e}")))?;
    assemble(rows)
}

fn column(rows: &[Row], name: &str, get: impl Fn(&Row) -> Option<f64>) -> AppResult<Option<Vec<f64>>> {
    let present = rows.iter().filter(|r| get(r).is_some()).count();
    if present == 0 {
        return Ok(None);
    }
    if present != rows.len() {
        return Err(usage(format!("column `{name}` is missing on some rows")));
    }
    Ok(Some(rows.iter().map(|r| get(r).unwrap_or_default()).collect()))
}

fn assemble(mut rows: Vec<Row>) -> AppResult<PopulationInput> {
    if rows.is_empty() {
        return Err(usage("population file has no rows"));
    }
    let n = rows.len();
    let indexed = rows.iter().filter(|r| r.index.is_some()).count();
    if indexed != 0 && indexed != n {
        return Err(usage("column `index` is missing on some rows"));
    }
    if indexed == n {
        let mut seen = vec![false; n];
        for r in &rows {
            let i = r.index.unwrap_or_default();
            if i == 0 || i > n {
                return Err(usage(format!("index {i} outside 1..={n}")));
            }
            if std::mem::replace(&mut seen[i - 1], true) {
                return Err(usage(format!("duplicate index {i}")));
            }
        }
        rows.sort_by_key(|r| r.index);
    }
    let x: Vec<f64> = rows.iter().map(|r| r.x).collect();
    let nominal = match column(&rows, "p", |r| r.p)? {
        Some(p) => Distribution::new(p)?,
        None => Distribution::uniform(n)?,
    };
    let true_dist = column(&rows, "q", |r| r.q)?.map(Distribution::new).transpose()?;
    Ok(PopulationInput { population: Population::new(x)?, nominal, true_dist })
}

/// Reads 1-based indices and returns them 0-based.
pub fn read_samples(path: &Path, n: usize) -> AppResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    parse_samples(&text, n)
}

pub fn parse_samples(text: &str, n: usize) -> AppResult<Vec<usize>> {
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let token = line.split(',').next().unwrap_or("").trim();
        if token.is_empty() || (line_no == 0 && token == "index") {
            continue;
        }
        let i: usize = token.parse().map_err(|_| usage(format!("sample line {}: `{token}` is not an index", line_no + 1)))?;
        if i == 0 || i > n {
            return Err(usage(format!("sample line {}: index {i} outside 1..={n}", line_no + 1)));
        }
        out.push(i - 1);
    }
    Ok(out)
}

/// Parses `a/b`, an integer, or a plain decimal such as `0.25` exactly.
pub fn parse_rational(s: &str) -> AppResult<BigRational> {
    let s = s.trim();
    let bad = || usage(format!("`{s}` is not a rational number"));
    if let Some((num, den)) = s.split_once('/') {
        let num: BigInt = num.trim().parse().map_err(|_| bad())?;
        let den: BigInt = den.trim().parse().map_err(|_| bad())?;
        if den.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(num, den));
    }
    let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
    if frac_part.starts_with(['+', '-']) || (int_part.is_empty() && frac_part.is_empty()) {
        return Err(bad());
    }
    let digits = format!("{}{}", if int_part.is_empty() { "0" } else { int_part }, frac_part);
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let den = BigInt::from(10u32).pow(frac_part.len() as u32);
    Ok(BigRational::new(num, den))
}

/// Comma-separated list of floats.
pub fn parse_f64_list(s: &str) -> AppResult<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("`{t}` is not a number"))))
        .collect()
}

/// Comma-separated list of non-negative integers.
pub fn parse_usize_list(s: &str) -> AppResult<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| usage(format!("`{t}` is not a count"))))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelJson {
    pub i: usize,
    pub prob_num: i64,
    pub prob_den: i64,
    pub count_num: i64,
    pub count_den: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpectrumJson {
    pub n0: u64,
    pub levels: Vec<LevelJson>,
}

fn parts(r: &BigRational) -> AppResult<(i64, i64)> {
    match (r.numer().to_i64(), r.denom().to_i64()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(AppError::Infeasible(format!("rational {r} does not fit in 64-bit integers"))),
    }
}

impl SpectrumJson {
    pub fn from_spectrum(s: &MassSpectrum) -> AppResult<Self> {
        let levels = s
            .levels
            .iter()
            .map(|l| {
                let (prob_num, prob_den) = parts(&l.prob)?;
                let (count_num, count_den) = parts(&l.count)?;
                Ok(LevelJson { i: l.i, prob_num, prob_den, count_num, count_den })
            })
            .collect::<AppResult<_>>()?;
        Ok(SpectrumJson { n0: s.n0, levels })
    }

    pub fn from_realized(s: &RealizedSpectrum) -> AppResult<Self> {
        let levels = s
            .levels
            .iter()
            .map(|l| {
                let (prob_num, prob_den) = parts(&l.prob)?;
                let count_num = i64::try_from(l.count).map_err(|_| AppError::Infeasible("count overflow".into()))?;
                Ok(LevelJson { i: l.i, prob_num, prob_den, count_num, count_den: 1 })
            })
            .collect::<AppResult<_>>()?;
        Ok(SpectrumJson { n0: s.n0, levels })
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a failed run never leaves a partial file. `None` writes to stdout.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> AppResult<()> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        out.write_all(bytes)?;
        return Ok(out.flush()?);
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| AppError::Io(e.error))?;
    Ok(())
}
