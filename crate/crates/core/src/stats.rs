//! Paired model comparison across benchmark splits.
//!
//! [`wilcoxon_exact`] runs the Wilcoxon signed-rank test with an exact null
//! distribution. Zero differences are dropped, tied magnitudes get midranks,
//! and the p-value counts sign assignments of the observed ranks. Midranks are
//! multiples of one half, so the count runs over doubled ranks in integer
//! arithmetic: the result is exact, with no floating-point ties to break.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of nonzero differences the exact test accepts.
pub const MAX_EXACT_N: usize = 25;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("paired vectors differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("all paired differences are zero; nothing to test")]
    NoDifferences,
    #[error("{0} nonzero differences exceed the exact-test limit of {MAX_EXACT_N}")]
    TooLarge(usize),
    #[error("empty input")]
    Empty,
    #[error("input contains a non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Which side the observed differences lean towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `a` tends to exceed `b`.
    AGreater,
    /// `b` tends to exceed `a`.
    BGreater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W-)`.
    pub w_statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    pub n_effective: usize,
    pub p_two_sided: f64,
    /// One-sided p in the observed direction.
    pub p_one_sided: f64,
    pub direction: Direction,
}

/// Midranks of `values` (1-based), doubled so they stay integral.
pub(crate) fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u64; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j share rank (i+1 + j+1)/2; doubled: i + j + 2
        let doubled = (i + j + 2) as u64;
        for &ix in &order[i..=j] {
            ranks[ix] = doubled;
        }
        i = j + 1;
    }
    ranks
}

/// Number of sign assignments giving each doubled positive-rank sum.
fn sign_sum_counts(doubled_ranks: &[u64]) -> Vec<u64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in doubled_ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            let c = counts[s];
            if c != 0 {
                counts[s + r] += c;
            }
        }
        reach += r;
    }
    counts
}

/// Exact Wilcoxon signed-rank test of `a` against `b`.
pub fn wilcoxon_exact(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch { a: a.len(), b: b.len() });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Err(StatsError::NoDifferences);
    }
    if n > MAX_EXACT_N {
        return Err(StatsError::TooLarge(n));
    }

    let magnitudes: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&magnitudes);
    let total: u64 = ranks.iter().sum();
    let plus: u64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let minus = total - plus;

    let counts = sign_sum_counts(&ranks);
    let all = 1u64 << n;
    let upper: u64 = counts[plus as usize..].iter().sum();
    let lower: u64 = counts[..=plus as usize].iter().sum();
    let p_greater = upper as f64 / all as f64;
    let p_less = lower as f64 / all as f64;

    let (p_one_sided, direction) = if p_greater <= p_less {
        (p_greater, Direction::AGreater)
    } else {
        (p_less, Direction::BGreater)
    };
    Ok(WilcoxonResult {
        w_statistic: plus.min(minus) as f64 / 2.0,
        w_plus: plus as f64 / 2.0,
        w_minus: minus as f64 / 2.0,
        n_effective: n,
        p_two_sided: (2.0 * p_one_sided).min(1.0),
        p_one_sided,
        direction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Ok(Summary {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
