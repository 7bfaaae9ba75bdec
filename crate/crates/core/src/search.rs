//! Constrained random search for family-disjoint train/test splits.
//!
//! Given a recall matrix `M` and a target `tau`, the search looks for a set of
//! training families `T` and testing families `V`, disjoint and of equal size,
//! such that every cross pair satisfies `|M[t][v] - tau| <= eps`.
//!
//! The search draws candidate pairs `(t, v)` whose own entry is already within
//! the band, and accepts a pair only if neither family is in use and the pair
//! is compatible with every family accepted so far. If `max_attempts` draws
//! at one band width pass without completing the sets, the band is widened by
//! `step`. Accepted families are kept across widenings; only the candidates
//! from the newly admitted annulus `eps_prev < |M - tau| <= eps_new` are
//! appended to the pool.
//!
//! Widening always terminates for `K >= 2 * set_size`: once
//! `eps >= max(tau, 1 - tau)` every off-diagonal pair is a candidate and every
//! compatibility check passes.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::CrossErrorMatrix;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum SearchError {
    #[error("need at least {needed} families for two disjoint sets of {set_size}, matrix has {k}")]
    Infeasible {
        k: usize,
        set_size: usize,
        needed: usize,
    },
    #[error("invalid search configuration: {0}")]
    BadConfig(String),
}

pub type Result<T> = std::result::Result<T, SearchError>;

/// The three standard difficulty tiers and their recall targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn tau(self) -> f64 {
        match self {
            Difficulty::Easy => 0.9,
            Difficulty::Medium => 0.5,
            Difficulty::Hard => 0.25,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub tau: f64,
    pub epsilon0: f64,
    pub step: f64,
    pub max_attempts: usize,
    pub set_size: usize,
    pub seed: u64,
}

impl SearchConfig {
    pub fn new(tau: f64, seed: u64) -> Self {
        Self {
            tau,
            epsilon0: 0.05,
            step: 0.05,
            max_attempts: 1000,
            set_size: 10,
            seed,
        }
    }

    pub fn standard(difficulty: Difficulty, seed: u64) -> Self {
        Self::new(difficulty.tau(), seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SearchError::BadConfig(msg));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau = {} must lie strictly between 0 and 1", self.tau));
        }
        if !(self.epsilon0 > 0.0 && self.epsilon0.is_finite()) {
            return bad(format!("epsilon0 = {} must be positive", self.epsilon0));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad(format!("step = {} must be positive", self.step));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        if self.set_size == 0 {
            return bad("set_size must be at least 1".into());
        }
        Ok(())
    }

    /// Band half-width after `relaxations` widenings.
    pub fn epsilon_at(&self, relaxations: usize) -> f64 {
        self.epsilon0 + self.step * relaxations as f64
    }
}

/// One train/test split produced by [`search_split`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_families: Vec<String>,
    pub test_families: Vec<String>,
    pub tau: f64,
    pub epsilon_final: f64,
    pub seed: u64,
    pub relaxations: usize,
    pub attempts_total: usize,
}

impl SplitSpec {
    /// Largest `|M[t][v] - tau|` over all cross pairs, or `None` if a family
    /// is missing from `m`.
    pub fn max_deviation(&self, m: &CrossErrorMatrix) -> Option<f64> {
        let train: Vec<usize> = self.train_families.iter().map(|f| m.index_of(f).ok()).collect::<Option<_>>()?;
        let test: Vec<usize> = self.test_families.iter().map(|f| m.index_of(f).ok()).collect::<Option<_>>()?;
        let mut worst = 0.0_f64;
        for &t in &train {
            for &v in &test {
                worst = worst.max((m.get(t, v) - self.tau).abs());
            }
        }
        Some(worst)
    }

    pub fn is_disjoint(&self) -> bool {
        self.train_families
            .iter()
            .all(|f| !self.test_families.contains(f))
    }
}

/// A difficulty tier: several independently searched splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSet {
    pub difficulty_label: String,
    #[serde(flatten)]
    pub config: SearchConfig,
    pub splits: Vec<SplitSpec>,
}

/// `|x - tau| <= eps`, the one closeness test used everywhere.
#[inline]
pub fn within_band(x: f64, tau: f64, eps: f64) -> bool {
    (x - tau).abs() <= eps
}

/// Off-diagonal `(train, test)` index pairs with
/// `lower < |M[t][v] - tau| <= upper`, in row-major order.
///
/// `lower = None` drops the lower bound.
pub fn candidate_pairs(
    m: &CrossErrorMatrix,
    tau: f64,
    lower: Option<f64>,
    upper: f64,
) -> Vec<(usize, usize)> {
    let k = m.k();
    let mut out = Vec::new();
    for t in 0..k {
        let row = m.row(t);
        for (v, &x) in row.iter().enumerate() {
            if t == v {
                continue;
            }
            let dev = (x - tau).abs();
            if dev <= upper && lower.is_none_or(|lo| dev > lo) {
                out.push((t, v));
            }
        }
    }
    out
}

/// Index-level result of one search run.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub epsilon_final: f64,
    pub relaxations: usize,
    pub attempts_total: usize,
}

/// Runs the search and returns family indices.
pub fn search_indices(m: &CrossErrorMatrix, config: &SearchConfig) -> Result<SearchOutcome> {
    config.validate()?;
    let k = m.k();
    let n = config.set_size;
    let needed = 2 * n;
    if k < needed {
        return Err(SearchError::Infeasible {
            k,
            set_size: n,
            needed,
        });
    }

    let tau = config.tau;
    let mut rng = rng::seeded(config.seed);
    let mut relaxations = 0usize;
    let mut eps = config.epsilon_at(0);
    let mut candidates = candidate_pairs(m, tau, None, eps);

    let mut in_use = vec![false; k];
    let mut train: Vec<usize> = Vec::with_capacity(n);
    let mut test: Vec<usize> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let mut attempts_total = 0usize;

    while train.len() < n {
        // An empty pool cannot be drawn from; widen straight away.
        if attempts >= config.max_attempts || candidates.is_empty() {
            let previous = eps;
            relaxations += 1;
            eps = config.epsilon_at(relaxations);
            candidates.extend(candidate_pairs(m, tau, Some(previous), eps));
            attempts = 0;
            continue;
        }
        attempts += 1;
        attempts_total += 1;

        let (t, v) = candidates[rng.random_range(0..candidates.len())];
        if in_use[t] || in_use[v] {
            continue;
        }
        if !train.iter().all(|&tj| within_band(m.get(tj, v), tau, eps)) {
            continue;
        }
        if !test.iter().all(|&vj| within_band(m.get(t, vj), tau, eps)) {
            continue;
        }
        in_use[t] = true;
        in_use[v] = true;
        train.push(t);
        test.push(v);
    }

    Ok(SearchOutcome {
        train,
        test,
        epsilon_final: eps,
        relaxations,
        attempts_total,
    })
}

/// Searches one split. Deterministic in `(m, config)`.
pub fn search_split(m: &CrossErrorMatrix, config: &SearchConfig) -> Result<SplitSpec> {
    let out = search_indices(m, config)?;
    let names = |ix: &[usize]| ix.iter().map(|&i| m.family(i).to_string()).collect();
    Ok(SplitSpec {
        train_families: names(&out.train),
        test_families: names(&out.test),
        tau: config.tau,
        epsilon_final: out.epsilon_final,
        seed: config.seed,
        relaxations: out.relaxations,
        attempts_total: out.attempts_total,
    })
}

/// Searches `n_splits` splits, split `i` seeded with `derive_seed(config.seed, i)`.
///
/// Splits run in parallel; the result is ordered by split index and identical
/// to a sequential run.
pub fn generate_benchmark(
    m: &CrossErrorMatrix,
    config: &SearchConfig,
    n_splits: usize,
    label: impl Into<String>,
) -> Result<BenchmarkSet> {
    config.validate()?;
    let splits = (0..n_splits)
        .into_par_iter()
        .map(|i| {
            let cfg = SearchConfig {
                seed: rng::derive_seed(config.seed, i as u64),
                ..config.clone()
            };
            search_split(m, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkSet {
        difficulty_label: label.into(),
        config: config.clone(),
        splits,
    })
}
