//! Scoring: the matrix-based surrogate for multi-family training, benchmark
//! difficulty validation, and evaluation of external model predictions.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Label, MaterializedSplit};
use crate::matrix::{CrossErrorMatrix, MatrixError};
use crate::search::{within_band, BenchmarkSet};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("trained family set is empty")]
    EmptyTrained,
    #[error("{count} test samples have no prediction: {}", preview(.ids))]
    MissingPredictions { count: usize, ids: Vec<String> },
    #[error("score {score} for {id} is outside [0, 1]")]
    ScoreOutOfRange { id: String, score: f64 },
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("predictions line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn preview(ids: &[String]) -> String {
    const SHOWN: usize = 20;
    let mut s = ids.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// How single-family matrix entries combine into a recall for a model trained
/// on several families.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
    Min,
}

impl Aggregation {
    pub const ALL: [Aggregation; 3] = [Aggregation::Mean, Aggregation::Max, Aggregation::Min];

    /// Aggregates a non-empty slice.
    ///
    /// The mean is clamped to the slice's own range so rounding can never push
    /// it outside a band that contains every input.
    pub fn apply(self, xs: &[f64]) -> f64 {
        debug_assert!(!xs.is_empty());
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        match self {
            Aggregation::Mean => (xs.iter().sum::<f64>() / xs.len() as f64).clamp(lo, hi),
            Aggregation::Max => hi,
            Aggregation::Min => lo,
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Mean => "mean",
            Aggregation::Max => "max",
            Aggregation::Min => "min",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean" => Ok(Aggregation::Mean),
            "max" => Ok(Aggregation::Max),
            "min" => Ok(Aggregation::Min),
            other => Err(format!("unknown aggregation {other:?} (expected mean, max or min)")),
        }
    }
}

/// Surrogate recall on `target` of a model trained on `trained` (indices).
pub fn surrogate_recall_idx(
    m: &CrossErrorMatrix,
    trained: &[usize],
    target: usize,
    agg: Aggregation,
) -> Result<f64> {
    if trained.is_empty() {
        return Err(EvalError::EmptyTrained);
    }
    let xs: Vec<f64> = trained.iter().map(|&t| m.get(t, target)).collect();
    Ok(agg.apply(&xs))
}

/// Surrogate recall on `target` of a model trained on the `trained` families.
pub fn surrogate_recall<S: AsRef<str>>(
    m: &CrossErrorMatrix,
    trained: &[S],
    target: &str,
    agg: Aggregation,
) -> Result<f64> {
    let trained = indices(m, trained)?;
    let target = m.index_of(target)?;
    surrogate_recall_idx(m, &trained, target, agg)
}

pub(crate) fn indices<S: AsRef<str>>(m: &CrossErrorMatrix, names: &[S]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| m.index_of(n.as_ref()).map_err(EvalError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitValidation {
    pub split_index: usize,
    pub epsilon_final: f64,
    pub band: (f64, f64),
    pub per_family_recall: IndexMap<String, f64>,
    pub mean_recall: f64,
    pub flagged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkValidation {
    pub difficulty_label: String,
    pub tau: f64,
    pub aggregation: Aggregation,
    pub splits: Vec<SplitValidation>,
    pub mean_recall: f64,
    pub flag_count: usize,
}

impl BenchmarkValidation {
    /// `(split index, mean surrogate recall)` points.
    pub fn plot_points(&self) -> Vec<(usize, f64)> {
        self.splits.iter().map(|s| (s.split_index, s.mean_recall)).collect()
    }
}

/// Surrogate recall of each split's test families, flagging any that fall
/// outside `[tau - eps_final, tau + eps_final]`.
pub fn validate_benchmark(
    m: &CrossErrorMatrix,
    bench: &BenchmarkSet,
    agg: Aggregation,
) -> Result<BenchmarkValidation> {
    let tau = bench.config.tau;
    let mut splits = Vec::with_capacity(bench.splits.len());
    for (i, split) in bench.splits.iter().enumerate() {
        let trained = indices(m, &split.train_families)?;
        let eps = split.epsilon_final;
        let mut per_family_recall = IndexMap::new();
        let mut flagged = Vec::new();
        for name in &split.test_families {
            let r = surrogate_recall_idx(m, &trained, m.index_of(name)?, agg)?;
            if !within_band(r, tau, eps) {
                flagged.push(name.clone());
            }
            per_family_recall.insert(name.clone(), r);
        }
        let values: Vec<f64> = per_family_recall.values().copied().collect();
        let mean_recall = if values.is_empty() {
            0.0
        } else {
            Aggregation::Mean.apply(&values)
        };
        splits.push(SplitValidation {
            split_index: i,
            epsilon_final: eps,
            band: (tau - eps, tau + eps),
            per_family_recall,
            mean_recall,
            flagged,
        });
    }
    let mean_recall = if splits.is_empty() {
        0.0
    } else {
        splits.iter().map(|s| s.mean_recall).sum::<f64>() / splits.len() as f64
    };
    let flag_count = splits.iter().map(|s| s.flagged.len()).sum();
    Ok(BenchmarkValidation {
        difficulty_label: bench.difficulty_label.clone(),
        tau,
        aggregation: agg,
        splits,
        mean_recall,
        flag_count,
    })
}

/// External model scores keyed by sample ID.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub scores: HashMap<String, f64>,
    pub threshold: f64,
}

impl PredictionSet {
    pub fn new(scores: HashMap<String, f64>, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(EvalError::BadThreshold(threshold));
        }
        for (id, &score) in &scores {
            if !(0.0..=1.0).contains(&score) {
                return Err(EvalError::ScoreOutOfRange {
                    id: id.clone(),
                    score,
                });
            }
        }
        Ok(Self { scores, threshold })
    }

    /// Parses `sample_id<TAB>score` lines. Blank lines are ignored.
    pub fn parse(text: &str, threshold: f64) -> Result<Self> {
        let mut scores = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(id), Some(score), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(EvalError::Malformed {
                    line: line_no,
                    msg: "expected sample_id<TAB>score".into(),
                });
            };
            let score: f64 = score.trim().parse().map_err(|_| EvalError::Malformed {
                line: line_no,
                msg: format!("cannot parse score {score:?}"),
            })?;
            if scores.insert(id.to_string(), score).is_some() {
                return Err(EvalError::Malformed {
                    line: line_no,
                    msg: format!("duplicate sample id {id}"),
                });
            }
        }
        Self::new(scores, threshold)
    }

    pub fn load(path: impl AsRef<Path>, threshold: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, threshold)
    }

    fn flags_malicious(&self, score: f64) -> bool {
        score >= self.threshold
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub false_positive: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_negative + self.true_negative + self.false_positive
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.true_positive + self.true_negative, self.total())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub split_id: String,
    pub threshold: f64,
    pub per_family_recall: IndexMap<String, f64>,
    pub benign_accuracy: f64,
    pub overall_accuracy: f64,
    pub malware_recall_mean: f64,
    pub confusion: Confusion,
}

impl EvalResult {
    /// Named scalar metric, for feeding paired comparisons.
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "overall_accuracy" | "accuracy" => Some(self.overall_accuracy),
            "malware_recall_mean" | "recall" => Some(self.malware_recall_mean),
            "benign_accuracy" => Some(self.benign_accuracy),
            _ => None,
        }
    }
}

/// Scores the test side of a materialized split.
///
/// A record counts as flagged malicious when its score is at least the
/// threshold. Malware is summarized per family, then averaged.
pub fn evaluate_predictions(ms: &MaterializedSplit, preds: &PredictionSet) -> Result<EvalResult> {
    let missing: Vec<String> = ms
        .test
        .iter()
        .filter(|r| !preds.scores.contains_key(&r.sample_id))
        .map(|r| r.sample_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions {
            count: missing.len(),
            ids: missing,
        });
    }

    let mut confusion = Confusion::default();
    // family -> (hits, total), in first-seen order
    let mut by_family: IndexMap<String, (usize, usize)> = IndexMap::new();
    for r in &ms.test {
        let flagged = preds.flags_malicious(preds.scores[&r.sample_id]);
        match r.label {
            Label::Malicious => {
                let family = r.family.clone().unwrap_or_else(|| "-".into());
                let entry = by_family.entry(family).or_default();
                entry.1 += 1;
                if flagged {
                    entry.0 += 1;
                    confusion.true_positive += 1;
                } else {
                    confusion.false_negative += 1;
                }
            }
            Label::Benign => {
                if flagged {
                    confusion.false_positive += 1;
                } else {
                    confusion.true_negative += 1;
                }
            }
        }
    }
    let per_family_recall: IndexMap<String, f64> = by_family
        .into_iter()
        .map(|(f, (hits, total))| (f, ratio(hits, total)))
        .collect();
    let malware_recall_mean = if per_family_recall.is_empty() {
        0.0
    } else {
        per_family_recall.values().sum::<f64>() / per_family_recall.len() as f64
    };
    Ok(EvalResult {
        split_id: ms.split_id.clone(),
        threshold: preds.threshold,
        benign_accuracy: ratio(
            confusion.true_negative,
            confusion.true_negative + confusion.false_positive,
        ),
        overall_accuracy: confusion.accuracy(),
        malware_recall_mean,
        per_family_recall,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{Record, SplitCounts};
    use crate::search::{SearchConfig, SplitSpec};

    fn small() -> CrossErrorMatrix {
        CrossErrorMatrix::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![1.0, 0.3, 0.2], vec![0.6, 1.0, 0.8], vec![0.1, 0.5, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn singleton_is_the_matrix_entry() {
        let m = small();
        for agg in Aggregation::ALL {
            assert_eq!(surrogate_recall(&m, &["b"], "c", agg).unwrap(), 0.8);
        }
    }

    #[test]
    fn two_element_aggregation() {
        let m = small();
        // M[a][c] = 0.2, M[b][c] = 0.8
        let r = |agg| surrogate_recall(&m, &["a", "b"], "c", agg).unwrap();
        assert_eq!(r(Aggregation::Mean), 0.5);
        assert_eq!(r(Aggregation::Max), 0.8);
        assert_eq!(r(Aggregation::Min), 0.2);
    }

    #[test]
    fn surrogate_errors() {
        let m = small();
        assert!(matches!(
            surrogate_recall::<&str>(&m, &[], "a", Aggregation::Mean),
            Err(EvalError::EmptyTrained)
        ));
        assert!(matches!(
            surrogate_recall(&m, &["zz"], "a", Aggregation::Mean),
            Err(EvalError::Matrix(MatrixError::UnknownFamily(_)))
        ));
        assert!(surrogate_recall(&m, &["a"], "zz", Aggregation::Mean).is_err());
    }

    #[test]
    fn mean_of_equal_values_stays_exact() {
        let x = 0.1 + 0.2;
        assert_eq!(Aggregation::Mean.apply(&[x; 10]), x);
    }

    #[test]
    fn validation_flags_out_of_band_families() {
        let m = small();
        let bench = BenchmarkSet {
            difficulty_label: "custom".into(),
            config: SearchConfig::new(0.5, 0),
            splits: vec![SplitSpec {
                train_families: vec!["b".into()],
                test_families: vec!["a".into(), "c".into()],
                tau: 0.5,
                epsilon_final: 0.1,
                seed: 0,
                relaxations: 1,
                attempts_total: 0,
            }],
        };
        let v = validate_benchmark(&m, &bench, Aggregation::Mean).unwrap();
        // 0.6 is in [0.4, 0.6]; 0.8 is not
        assert_eq!(v.splits[0].flagged, vec!["c".to_string()]);
        assert_eq!(v.flag_count, 1);
        assert_eq!(v.plot_points(), vec![(0, 0.7)]);
    }

    fn record(id: &str, label: Label, family: Option<&str>) -> Record {
        Record {
            sample_id: id.into(),
            label,
            family: family.map(str::to_string),
        }
    }

    fn toy_split() -> MaterializedSplit {
        let test = vec![
            record("m1", Label::Malicious, Some("C")),
            record("m2", Label::Malicious, Some("C")),
            record("m3", Label::Malicious, Some("D")),
            record("m4", Label::Malicious, Some("D")),
            record("b1", Label::Benign, None),
            record("b2", Label::Benign, None),
            record("b3", Label::Benign, None),
            record("b4", Label::Benign, None),
        ];
        MaterializedSplit {
            split_id: "toy".into(),
            spec: SplitSpec {
                train_families: vec!["A".into(), "B".into()],
                test_families: vec!["C".into(), "D".into()],
                tau: 0.5,
                epsilon_final: 0.05,
                seed: 0,
                relaxations: 0,
                attempts_total: 0,
            },
            seed: 0,
            train_per_family: 0,
            test_per_family: 2,
            train: Vec::new(),
            counts: SplitCounts::tally(&[], &test),
            test,
        }
    }

    fn preds(pairs: &[(&str, f64)]) -> PredictionSet {
        PredictionSet::new(pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect(), 0.5).unwrap()
    }

    #[test]
    fn perfect_predictor() {
        let ms = toy_split();
        let p = preds(&[
            ("m1", 1.0), ("m2", 0.9), ("m3", 0.5), ("m4", 1.0),
            ("b1", 0.0), ("b2", 0.1), ("b3", 0.49), ("b4", 0.0),
        ]);
        let r = evaluate_predictions(&ms, &p).unwrap();
        assert!(r.per_family_recall.values().all(|&x| x == 1.0));
        assert_eq!((r.benign_accuracy, r.overall_accuracy, r.malware_recall_mean), (1.0, 1.0, 1.0));
    }

    #[test]
    fn always_malware_predictor() {
        let ms = toy_split();
        let ids = ["m1", "m2", "m3", "m4", "b1", "b2", "b3", "b4"];
        let p = preds(&ids.map(|id| (id, 1.0)));
        let r = evaluate_predictions(&ms, &p).unwrap();
        assert_eq!(r.malware_recall_mean, 1.0);
        assert_eq!(r.benign_accuracy, 0.0);
        assert_eq!(r.overall_accuracy, 0.5);
    }

    #[test]
    fn two_errors_in_eight_records() {
        let ms = toy_split();
        // m3 missed (false negative), b2 flagged (false positive)
        let p = preds(&[
            ("m1", 0.8), ("m2", 0.7), ("m3", 0.2), ("m4", 0.6),
            ("b1", 0.1), ("b2", 0.9), ("b3", 0.3), ("b4", 0.0),
        ]);
        let r = evaluate_predictions(&ms, &p).unwrap();
        assert_eq!(
            r.confusion,
            Confusion { true_positive: 3, false_negative: 1, true_negative: 3, false_positive: 1 }
        );
        assert_eq!(r.overall_accuracy, 0.75);
        assert_eq!(r.benign_accuracy, 0.75);
        assert_eq!(r.per_family_recall["C"], 1.0);
        assert_eq!(r.per_family_recall["D"], 0.5);
        assert_eq!(r.malware_recall_mean, 0.75);
    }

    #[test]
    fn missing_predictions_are_listed() {
        let ms = toy_split();
        let p = preds(&[("m1", 1.0)]);
        match evaluate_predictions(&ms, &p).unwrap_err() {
            EvalError::MissingPredictions { count, ids } => {
                assert_eq!(count, 7);
                assert!(ids.contains(&"b4".to_string()));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn prediction_parsing() {
        let p = PredictionSet::parse("a\t0.25\nb\t1\n\n", 0.5).unwrap();
        assert_eq!(p.scores["a"], 0.25);
        assert_eq!(p.scores["b"], 1.0);
        assert!(matches!(
            PredictionSet::parse("a\t1.5\n", 0.5),
            Err(EvalError::ScoreOutOfRange { .. })
        ));
        assert!(matches!(
            PredictionSet::parse("a 0.5\n", 0.5),
            Err(EvalError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            PredictionSet::parse("a\t0.5\na\t0.2\n", 0.5),
            Err(EvalError::Malformed { line: 2, .. })
        ));
    }
}
