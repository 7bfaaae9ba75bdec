//! Baseline split strategies that rank families by their average recall on
//! other families: keep the best-generalizing `k` (top-K) or the worst (worst-K).
//!
//! Neither gives a controllable difficulty. Top-K selections leave per-family
//! recall spread widely across the untouched families; worst-K selections
//! memorize their own families and detect almost nothing else. The report
//! produced here quantifies both effects with the surrogate recall of
//! [`crate::eval`].

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{self, surrogate_recall_idx, Aggregation, EvalError};
use crate::matrix::CrossErrorMatrix;
use crate::stats;

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("k = {k} is outside 1..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("selection is empty")]
    EmptySelection,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, AblationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Top,
    Worst,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "top" => Ok(Strategy::Top),
            "worst" => Ok(Strategy::Worst),
            other => Err(format!("unknown mode {other:?} (expected top or worst)")),
        }
    }
}

/// All family indices ordered by off-diagonal row mean, best first for
/// [`Strategy::Top`] and worst first for [`Strategy::Worst`]. Ties keep
/// ascending index order.
pub fn ranking(m: &CrossErrorMatrix, strategy: Strategy) -> Vec<usize> {
    let means = m.off_diagonal_row_means();
    let mut order: Vec<usize> = (0..m.k()).collect();
    order.sort_by(|&a, &b| {
        let by_mean = means[a].total_cmp(&means[b]);
        let by_mean = match strategy {
            Strategy::Top => by_mean.reverse(),
            Strategy::Worst => by_mean,
        };
        by_mean.then(a.cmp(&b))
    });
    order
}

pub fn select_indices(m: &CrossErrorMatrix, strategy: Strategy, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > m.k() {
        return Err(AblationError::KOutOfRange { k, max: m.k() });
    }
    let mut order = ranking(m, strategy);
    order.truncate(k);
    Ok(order)
}

fn names(m: &CrossErrorMatrix, ix: &[usize]) -> Vec<String> {
    ix.iter().map(|&i| m.family(i).to_string()).collect()
}

/// The `k` families with the highest average recall on other families.
pub fn select_top_k(m: &CrossErrorMatrix, k: usize) -> Result<Vec<String>> {
    Ok(names(m, &select_indices(m, Strategy::Top, k)?))
}

/// The `k` families with the lowest average recall on other families.
pub fn select_worst_k(m: &CrossErrorMatrix, k: usize) -> Result<Vec<String>> {
    Ok(names(m, &select_indices(m, Strategy::Worst, k)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub aggregation: Aggregation,
    pub selected_families: Vec<String>,
    pub per_family_recall: IndexMap<String, f64>,
    /// `None` when the selection covers every family.
    pub mean_off_selected: Option<f64>,
    pub std_off_selected: Option<f64>,
    pub self_recall_min: f64,
}

impl AblationReport {
    /// `(family index, recall)` points over every family.
    pub fn plot_points(&self) -> Vec<(usize, f64)> {
        self.per_family_recall.values().copied().enumerate().collect()
    }
}

/// Surrogate recall of a model trained on `selected`, for every family.
///
/// The mean and population standard deviation cover families outside the
/// selection; `self_recall_min` is the lowest recall on a selected family.
pub fn ablation_report<S: AsRef<str>>(
    m: &CrossErrorMatrix,
    selected: &[S],
    agg: Aggregation,
) -> Result<AblationReport> {
    if selected.is_empty() {
        return Err(AblationError::EmptySelection);
    }
    let chosen = eval::indices(m, selected)?;
    let mut is_selected = vec![false; m.k()];
    for &i in &chosen {
        is_selected[i] = true;
    }

    let mut per_family_recall = IndexMap::with_capacity(m.k());
    let mut off = Vec::new();
    let mut own = Vec::new();
    for v in 0..m.k() {
        let r = surrogate_recall_idx(m, &chosen, v, agg)?;
        per_family_recall.insert(m.family(v).to_string(), r);
        if is_selected[v] { own.push(r) } else { off.push(r) }
    }
    let summary = stats::summarize(&off).ok();
    let mean_off_selected = summary.as_ref().map(|s| s.mean);
    let std_off_selected = summary.as_ref().map(|s| s.std);
    let self_recall_min = own.iter().copied().fold(f64::INFINITY, f64::min);

    Ok(AblationReport {
        aggregation: agg,
        selected_families: names(m, &chosen),
        per_family_recall,
        mean_off_selected,
        std_off_selected,
        self_recall_min,
    })
}

/// Mean surrogate recall over all families for a selection of each size in
/// `ks`, the curve that shows how unevenly top-K difficulty moves with K.
pub fn mean_recall_curve(
    m: &CrossErrorMatrix,
    strategy: Strategy,
    ks: &[usize],
    agg: Aggregation,
) -> Result<Vec<(usize, f64)>> {
    let order = ranking(m, strategy);
    ks.iter()
        .map(|&k| {
            if k == 0 || k > m.k() {
                return Err(AblationError::KOutOfRange { k, max: m.k() });
            }
            let chosen = &order[..k];
            let total: f64 = (0..m.k())
                .map(|v| surrogate_recall_idx(m, chosen, v, agg))
                .sum::<std::result::Result<f64, _>>()?;
            Ok((k, total / m.k() as f64))
        })
        .collect()
}

/// Default curve abscissae: 5, 10, ..., 35.
pub const CURVE_KS: [usize; 7] = [5, 10, 15, 20, 25, 30, 35];
