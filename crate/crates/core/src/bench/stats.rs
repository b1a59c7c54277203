//! One-sided Wilcoxon signed-rank test with Holm–Bonferroni correction.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Minimum number of pairs (before dropping zeros) for a test.
pub const MIN_PAIRS: usize = 5;
/// Exact null distribution is always used up to this many nonzero pairs.
pub const EXACT_MAX: usize = 20;
/// Beyond `EXACT_MAX`, the exact distribution is still used up to this size
/// when no zero differences were dropped.
pub const EXACT_MAX_NO_ZEROS: usize = 50;

const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum StatsError {
    #[error("need at least {MIN_PAIRS} pairs, got {0}")]
    TooFewPairs(usize),
    #[error("all differences are zero; no test possible")]
    AllZero,
    #[error("differences must be finite numbers")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedRank {
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub zeros: usize,
    /// Sum of (mid)ranks of the positive differences.
    pub w_plus: f64,
    /// One-sided p-value for a positive median difference.
    pub p_value: f64,
    pub method: Method,
}

fn is_zero(x: f64) -> bool {
    x.abs() <= TIE_TOLERANCE * x.abs().max(1.0)
}

fn same_magnitude(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Doubled midranks of `|d|` (so tied ranks stay integral), plus the sizes
/// of each tie group.
fn doubled_ranks(nonzero: &[f64]) -> (Vec<(u64, bool)>, Vec<usize>) {
    let mut by_size: Vec<f64> = nonzero.to_vec();
    by_size.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut ranked = Vec::with_capacity(by_size.len());
    let mut ties = Vec::new();
    let mut i = 0;
    while i < by_size.len() {
        let mut j = i;
        while j + 1 < by_size.len() && same_magnitude(by_size[j + 1].abs(), by_size[i].abs()) {
            j += 1;
        }
        // positions i..=j are 1-based ranks i+1..=j+1; doubled midrank is their sum
        let doubled = (i + 1 + j + 1) as u64;
        for d in &by_size[i..=j] {
            ranked.push((doubled, *d > 0.0));
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranked, ties)
}

/// One-sided signed-rank test of `median(deltas) > 0`. Zero differences are
/// dropped before ranking.
pub fn wilcoxon_signed_rank(deltas: &[f64]) -> Result<SignedRank, StatsError> {
    if deltas.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    if deltas.len() < MIN_PAIRS {
        return Err(StatsError::TooFewPairs(deltas.len()));
    }
    let nonzero: Vec<f64> = deltas.iter().copied().filter(|d| !is_zero(*d)).collect();
    let zeros = deltas.len() - nonzero.len();
    let n = nonzero.len();
    if n == 0 {
        return Err(StatsError::AllZero);
    }
    let (ranked, ties) = doubled_ranks(&nonzero);
    let w2: u64 = ranked.iter().filter(|(_, pos)| *pos).map(|(r, _)| r).sum();
    let w_plus = w2 as f64 / 2.0;

    if n <= EXACT_MAX || (zeros == 0 && n <= EXACT_MAX_NO_ZEROS) {
        let p_value = exact_upper_tail(&ranked, w2);
        return Ok(SignedRank {
            n,
            zeros,
            w_plus,
            p_value,
            method: Method::Exact,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = ties.iter().map(|&t| (t.pow(3) - t) as f64).sum::<f64>() / 48.0;
    let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let z = (w_plus - mean) / variance.sqrt();
    let p_value = Normal::new(0.0, 1.0).expect("standard normal").cdf(-z);
    Ok(SignedRank {
        n,
        zeros,
        w_plus,
        p_value,
        method: Method::Normal,
    })
}

/// P(W+ >= observed) under the null, where each rank is positive with
/// probability 1/2 independently.
fn exact_upper_tail(ranked: &[(u64, bool)], observed_doubled: u64) -> f64 {
    let total: u64 = ranked.iter().map(|(r, _)| r).sum();
    let mut counts = vec![0.0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &(rank, _) in ranked {
        let rank = rank as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + rank] += counts[s];
            }
        }
        reach += rank;
    }
    let tail: f64 = counts[observed_doubled as usize..].iter().sum();
    tail / 2f64.powi(ranked.len() as i32)
}

/// Holm–Bonferroni step-down adjustment, returned in input order.
pub fn holm_bonferroni(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    adjusted
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedStats {
    pub label: String,
    pub n_pairs: usize,
    pub median_delta: f64,
    pub p_raw: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyRow {
    Tested(PairedStats),
    Untestable {
        label: String,
        n_pairs: usize,
        median_delta: Option<f64>,
        reason: StatsError,
    },
}

impl FamilyRow {
    pub fn label(&self) -> &str {
        match self {
            FamilyRow::Tested(stats) => &stats.label,
            FamilyRow::Untestable { label, .. } => label,
        }
    }
}

/// Test each labeled set of paired differences and Holm-correct across the
/// rows that could be tested. Rows keep their input order.
pub fn paired_family(rows: &[(String, Vec<f64>)]) -> Vec<FamilyRow> {
    let tests: Vec<Result<SignedRank, StatsError>> = rows
        .iter()
        .map(|(_, deltas)| wilcoxon_signed_rank(deltas))
        .collect();
    let raw: Vec<f64> = tests
        .iter()
        .filter_map(|t| t.as_ref().ok())
        .map(|t| t.p_value)
        .collect();
    let mut adjusted = holm_bonferroni(&raw).into_iter();
    rows.iter()
        .zip(tests)
        .map(|((label, deltas), test)| match test {
            Ok(test) => FamilyRow::Tested(PairedStats {
                label: label.clone(),
                n_pairs: deltas.len(),
                median_delta: median(deltas).unwrap_or(0.0),
                p_raw: test.p_value,
                p_adjusted: adjusted.next().expect("one adjusted value per test"),
            }),
            Err(reason) => FamilyRow::Untestable {
                label: label.clone(),
                n_pairs: deltas.len(),
                median_delta: median(deltas),
                reason,
            },
        })
        .collect()
}
