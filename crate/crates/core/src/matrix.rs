//! The family-level cross-generalization matrix.
//!
//! Entry `[t][v]` is the recall of a detector trained only on family `t` and
//! tested on family `v`: rows are training families, columns are testing
//! families. Values are fractions in `[0, 1]`.
//!
//! The on-disk form is a headed CSV:
//!
//! ```text
//! family,allaple,zbot
//! allaple,0.990000,0.412000
//! zbot,0.170000,1.000000
//! ```
//!
//! [`save_matrix`] always writes six fractional digits, so a file produced by
//! it loads and re-saves to identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Characters that cannot appear in a family name.
const FORBIDDEN_NAME_CHARS: &[char] = &[',', '\t', '\n', '\r'];

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("matrix needs at least 2 families, got {0}")]
    TooSmall(usize),
    #[error("line {line}: header must start with \"family\"")]
    BadHeader { line: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    NotSquare {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("expected {expected} data rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {text:?} as a number")]
    Parse {
        line: usize,
        column: usize,
        text: String,
    },
    #[error("row {row}, column {column}: value {value} is outside [0, 1]")]
    OutOfRange { row: usize, column: usize, value: f64 },
    #[error("family name at position {0} is empty")]
    EmptyName(usize),
    #[error("family name {0:?} contains a delimiter character")]
    BadName(String),
    #[error("family name {0:?} appears more than once")]
    DuplicateName(String),
    #[error("line {line}: row family {found:?} does not match header family {expected:?}")]
    RowNameMismatch {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("family index {index} out of range for {k} families")]
    IndexOutOfRange { index: usize, k: usize },
    #[error("unknown family {0:?}")]
    UnknownFamily(String),
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
}

pub type Result<T> = std::result::Result<T, MatrixError>;

/// A validated square recall matrix over named families.
///
/// Immutable once built; share it by reference across concurrent searches.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossErrorMatrix {
    families: Vec<String>,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl CrossErrorMatrix {
    /// Builds a matrix from family names and row-major rows.
    pub fn new(families: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = families.len();
        if k < 2 {
            return Err(MatrixError::TooSmall(k));
        }
        let mut index = HashMap::with_capacity(k);
        for (pos, name) in families.iter().enumerate() {
            validate_name(name, pos)?;
            if index.insert(name.clone(), pos).is_some() {
                return Err(MatrixError::DuplicateName(name.clone()));
            }
        }
        if rows.len() != k {
            return Err(MatrixError::RowCount {
                expected: k,
                found: rows.len(),
            });
        }
        let mut values = Vec::with_capacity(k * k);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(MatrixError::NotSquare {
                    line: r + 2,
                    expected: k + 1,
                    found: row.len() + 1,
                });
            }
            for (c, &value) in row.iter().enumerate() {
                check_value(value, r, c)?;
            }
            values.extend(row);
        }
        Ok(Self {
            families,
            values,
            index,
        })
    }

    /// Number of families (the side length).
    pub fn k(&self) -> usize {
        self.families.len()
    }

    pub fn families(&self) -> &[String] {
        &self.families
    }

    pub fn family(&self, index: usize) -> &str {
        &self.families[index]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| MatrixError::UnknownFamily(name.to_string()))
    }

    /// Recall of the model trained on `train` when tested on `test`.
    #[inline]
    pub fn get(&self, train: usize, test: usize) -> f64 {
        self.values[train * self.k() + test]
    }

    pub fn row(&self, train: usize) -> &[f64] {
        let k = self.k();
        &self.values[train * k..(train + 1) * k]
    }

    /// Mean of row `family` (the family's generalization to others).
    ///
    /// With `include_self == false` the diagonal entry is left out.
    pub fn row_mean_recall(&self, family: usize, include_self: bool) -> Result<f64> {
        let k = self.k();
        if family >= k {
            return Err(MatrixError::IndexOutOfRange { index: family, k });
        }
        let row = self.row(family);
        let (sum, n) = if include_self {
            (row.iter().sum::<f64>(), k)
        } else {
            let sum = row
                .iter()
                .enumerate()
                .filter(|&(v, _)| v != family)
                .map(|(_, x)| x)
                .sum::<f64>();
            (sum, k - 1)
        };
        Ok(sum / n as f64)
    }

    /// Row means with the diagonal excluded, for every family.
    pub fn off_diagonal_row_means(&self) -> Vec<f64> {
        (0..self.k())
            .map(|t| self.row_mean_recall(t, false).expect("index in range"))
            .collect()
    }

    /// Canonical CSV text, as written by [`save_matrix`].
    pub fn to_csv(&self) -> String {
        let k = self.k();
        let mut out = String::with_capacity((k + 1) * (k * 9 + 16));
        out.push_str("family");
        for name in &self.families {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (t, name) in self.families.iter().enumerate() {
            out.push_str(name);
            for &x in self.row(t) {
                write!(out, ",{x:.6}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }

    /// Parses CSV text. Lines starting with `#` and blank lines are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));

        let (header_line, header) = lines.next().ok_or(MatrixError::TooSmall(0))?;
        let mut fields = header.split(',');
        if fields.next() != Some("family") {
            return Err(MatrixError::BadHeader { line: header_line });
        }
        let families: Vec<String> = fields.map(str::to_string).collect();
        let k = families.len();
        if k < 2 {
            return Err(MatrixError::TooSmall(k));
        }
        let mut seen = HashMap::with_capacity(k);
        for (pos, name) in families.iter().enumerate() {
            validate_name(name, pos)?;
            if seen.insert(name.as_str(), pos).is_some() {
                return Err(MatrixError::DuplicateName(name.clone()));
            }
        }

        let mut rows = Vec::with_capacity(k);
        for (line, text) in lines {
            let fields: Vec<&str> = text.split(',').collect();
            if fields.len() != k + 1 {
                return Err(MatrixError::NotSquare {
                    line,
                    expected: k + 1,
                    found: fields.len(),
                });
            }
            let r = rows.len();
            if r >= k {
                return Err(MatrixError::RowCount {
                    expected: k,
                    found: r + 1,
                });
            }
            if fields[0] != families[r] {
                return Err(MatrixError::RowNameMismatch {
                    line,
                    expected: families[r].clone(),
                    found: fields[0].to_string(),
                });
            }
            let mut row = Vec::with_capacity(k);
            for (c, field) in fields[1..].iter().enumerate() {
                let value: f64 = field.trim().parse().map_err(|_| MatrixError::Parse {
                    line,
                    column: c + 2,
                    text: field.to_string(),
                })?;
                check_value(value, r, c)?;
                row.push(value);
            }
            rows.push(row);
        }
        if rows.len() != k {
            return Err(MatrixError::RowCount {
                expected: k,
                found: rows.len(),
            });
        }
        Self::new(families, rows)
    }
}

fn validate_name(name: &str, pos: usize) -> Result<()> {
    if name.trim().is_empty() {
        return Err(MatrixError::EmptyName(pos));
    }
    if name.contains(FORBIDDEN_NAME_CHARS) {
        return Err(MatrixError::BadName(name.to_string()));
    }
    Ok(())
}

fn check_value(value: f64, row: usize, column: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(MatrixError::OutOfRange { row, column, value });
    }
    Ok(())
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<CrossErrorMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MatrixError::Io {
        path: path.display().to_string(),
        source,
    })?;
    CrossErrorMatrix::from_csv(&text)
}

pub fn save_matrix(m: &CrossErrorMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_csv()).map_err(|source| MatrixError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Parameters of the planted-structure generator.
///
/// Off-diagonal entries are `clamp(g_t * d_v + noise, 0, 1)` where `g_t` is a
/// per-row generality factor and `d_v` a per-column detectability factor.
/// Loner rows (families that teach nothing about others) and hermit columns
/// (families nothing else detects) draw their factor from `[0, 0.1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub k: usize,
    pub seed: u64,
    pub generality_range: (f64, f64),
    pub detectability_range: (f64, f64),
    pub noise_sd: f64,
    pub diag_floor: f64,
    pub loner_fraction: f64,
    pub hermit_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            k: 184,
            seed: 7,
            generality_range: (0.3, 1.0),
            detectability_range: (0.4, 1.0),
            noise_sd: 0.02,
            diag_floor: 0.99,
            loner_fraction: 0.1,
            hermit_fraction: 0.1,
        }
    }
}

/// Factor range used for loner rows and hermit columns.
pub const OUTLIER_RANGE: (f64, f64) = (0.0, 0.1);

impl SynthParams {
    pub fn with_seed(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(MatrixError::TooSmall(self.k));
        }
        let fraction = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(MatrixError::BadParams(format!("{name} = {x} is not in [0, 1]")))
            }
        };
        for (name, (lo, hi)) in [
            ("generality_range", self.generality_range),
            ("detectability_range", self.detectability_range),
        ] {
            fraction(name, lo)?;
            fraction(name, hi)?;
            if lo > hi {
                return Err(MatrixError::BadParams(format!("{name} has lo {lo} > hi {hi}")));
            }
        }
        fraction("noise_sd", self.noise_sd)?;
        fraction("diag_floor", self.diag_floor)?;
        fraction("loner_fraction", self.loner_fraction)?;
        fraction("hermit_fraction", self.hermit_fraction)?;
        Ok(())
    }

    /// Number of loner rows the generator plants.
    pub fn loner_count(&self) -> usize {
        (self.loner_fraction * self.k as f64).round() as usize
    }

    pub fn hermit_count(&self) -> usize {
        (self.hermit_fraction * self.k as f64).round() as usize
    }
}

/// Planted factors behind a synthetic matrix, returned by [`synth_matrix_with_factors`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFactors {
    pub generality: Vec<f64>,
    pub detectability: Vec<f64>,
    pub loners: Vec<usize>,
    pub hermits: Vec<usize>,
}

/// Family names used by generated matrices: `fam000`, `fam001`, ...
pub fn synthetic_family_name(index: usize, k: usize) -> String {
    let width = (k.saturating_sub(1)).to_string().len().max(3);
    format!("fam{index:0width$}")
}

pub fn synth_matrix(p: &SynthParams) -> Result<CrossErrorMatrix> {
    synth_matrix_with_factors(p).map(|(m, _)| m)
}

/// Generates the matrix and also returns the factors that planted it.
///
/// Random draws happen in a fixed order (loner set, hermit set, row factors,
/// column factors, then noise in row-major order), so output is a pure
/// function of `p`.
pub fn synth_matrix_with_factors(p: &SynthParams) -> Result<(CrossErrorMatrix, PlantedFactors)> {
    p.validate()?;
    let k = p.k;
    let mut rng = rng::seeded(p.seed);

    let mut loners = sample(&mut rng, k, p.loner_count().min(k)).into_vec();
    loners.sort_unstable();
    let mut hermits = sample(&mut rng, k, p.hermit_count().min(k)).into_vec();
    hermits.sort_unstable();

    let draw = |range: (f64, f64), rng: &mut rng::Rng| {
        if range.0 == range.1 {
            range.0
        } else {
            rng.random_range(range.0..=range.1)
        }
    };
    let mut generality = Vec::with_capacity(k);
    for t in 0..k {
        let range = if loners.binary_search(&t).is_ok() {
            OUTLIER_RANGE
        } else {
            p.generality_range
        };
        generality.push(draw(range, &mut rng));
    }
    let mut detectability = Vec::with_capacity(k);
    for v in 0..k {
        let range = if hermits.binary_search(&v).is_ok() {
            OUTLIER_RANGE
        } else {
            p.detectability_range
        };
        detectability.push(draw(range, &mut rng));
    }

    let noise = Normal::new(0.0, p.noise_sd).map_err(|e| MatrixError::BadParams(e.to_string()))?;
    let mut rows = Vec::with_capacity(k);
    for t in 0..k {
        let mut row = Vec::with_capacity(k);
        for v in 0..k {
            let base = generality[t] * detectability[v];
            let x = if t == v {
                base.max(p.diag_floor)
            } else {
                let eta = if p.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                (base + eta).clamp(0.0, 1.0)
            };
            row.push(x);
        }
        rows.push(row);
    }

    let families = (0..k).map(|i| synthetic_family_name(i, k)).collect();
    let m = CrossErrorMatrix::new(families, rows)?;
    Ok((
        m,
        PlantedFactors {
            generality,
            detectability,
            loners,
            hermits,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> CrossErrorMatrix {
        CrossErrorMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.9, 1.0], vec![1.0, 0.9]],
        )
        .unwrap()
    }

    #[test]
    fn parses_minimal_csv() {
        let m = CrossErrorMatrix::from_csv("family,a,b\na,0.9,1.0\nb,1.0,0.9\n").unwrap();
        assert_eq!(m, two_by_two());
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 1), 0.9);
    }

    #[test]
    fn canonical_csv_is_three_lines_with_six_digits() {
        let text = two_by_two().to_csv();
        assert_eq!(text, "family,a,b\na,0.900000,1.000000\nb,1.000000,0.900000\n");
        let again = CrossErrorMatrix::from_csv(&text).unwrap().to_csv();
        assert_eq!(text, again);
    }

    #[test]
    fn rejects_non_square() {
        let err = CrossErrorMatrix::from_csv("family,a,b\na,0.9,1.0\nb,1.0\n").unwrap_err();
        assert!(matches!(err, MatrixError::NotSquare { line: 3, .. }), "{err}");
        let err = CrossErrorMatrix::from_csv("family,a,b\na,0.9,1.0\n").unwrap_err();
        assert!(matches!(err, MatrixError::RowCount { expected: 2, found: 1 }));
    }

    #[test]
    fn rejects_percentages_and_garbage() {
        let err = CrossErrorMatrix::from_csv("family,a,b\na,90,1.0\nb,1.0,0.9\n").unwrap_err();
        assert!(matches!(err, MatrixError::OutOfRange { row: 0, column: 0, .. }));
        let err = CrossErrorMatrix::from_csv("family,a,b\na,0.9,1.0\nb,x,0.9\n").unwrap_err();
        match err {
            MatrixError::Parse { line, column, .. } => assert_eq!((line, column), (3, 2)),
            other => panic!("unexpected {other}"),
        }
        let err = CrossErrorMatrix::from_csv("family,a,b\na,NaN,1.0\nb,1.0,0.9\n").unwrap_err();
        assert!(matches!(err, MatrixError::OutOfRange { .. }));
    }

    #[test]
    fn rejects_bad_names() {
        let err = CrossErrorMatrix::from_csv("family,a,a\na,0.9,1.0\na,1.0,0.9\n").unwrap_err();
        assert!(matches!(err, MatrixError::DuplicateName(ref n) if n == "a"));
        let err = CrossErrorMatrix::from_csv("family,a,\na,0.9,1.0\n,1.0,0.9\n").unwrap_err();
        assert!(matches!(err, MatrixError::EmptyName(1)));
        let err = CrossErrorMatrix::new(
            vec!["a\tb".into(), "c".into()],
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
        )
        .unwrap_err();
        assert!(matches!(err, MatrixError::BadName(_)));
        let err = CrossErrorMatrix::from_csv("family,a,b\nb,0.9,1.0\na,1.0,0.9\n").unwrap_err();
        assert!(matches!(err, MatrixError::RowNameMismatch { line: 2, .. }));
    }

    #[test]
    fn row_mean_excludes_diagonal_by_default() {
        let m = CrossErrorMatrix::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.4], vec![0.2, 1.0]],
        )
        .unwrap();
        assert_eq!(m.row_mean_recall(0, false).unwrap(), 0.4);
        assert_eq!(m.row_mean_recall(0, true).unwrap(), 0.7);
        assert!(matches!(
            m.row_mean_recall(2, false),
            Err(MatrixError::IndexOutOfRange { index: 2, k: 2 })
        ));
    }

    #[test]
    fn constant_matrix_row_means() {
        let k = 5;
        let families = (0..k).map(|i| format!("f{i}")).collect();
        let m = CrossErrorMatrix::new(families, vec![vec![0.375; k]; k]).unwrap();
        for t in 0..k {
            assert_eq!(m.row_mean_recall(t, false).unwrap(), 0.375);
            assert_eq!(m.row_mean_recall(t, true).unwrap(), 0.375);
        }
    }

    #[test]
    fn degenerate_synth_is_all_ones() {
        let p = SynthParams {
            k: 6,
            seed: 1,
            generality_range: (1.0, 1.0),
            detectability_range: (1.0, 1.0),
            noise_sd: 0.0,
            diag_floor: 0.99,
            loner_fraction: 0.0,
            hermit_fraction: 0.0,
        };
        let m = synth_matrix(&p).unwrap();
        assert!((0..6).all(|t| m.row(t).iter().all(|&x| x == 1.0)));
    }

    #[test]
    fn synth_rejects_tiny_k_and_bad_ranges() {
        assert!(matches!(
            synth_matrix(&SynthParams::with_seed(1, 0)),
            Err(MatrixError::TooSmall(1))
        ));
        let p = SynthParams {
            generality_range: (0.8, 0.2),
            ..SynthParams::default()
        };
        assert!(matches!(synth_matrix(&p), Err(MatrixError::BadParams(_))));
    }

    #[test]
    fn synth_is_deterministic_and_seed_sensitive() {
        let a = synth_matrix(&SynthParams::with_seed(30, 11)).unwrap();
        let b = synth_matrix(&SynthParams::with_seed(30, 11)).unwrap();
        let c = synth_matrix(&SynthParams::with_seed(30, 12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_names_sort_in_index_order() {
        assert_eq!(synthetic_family_name(7, 184), "fam007");
        assert_eq!(synthetic_family_name(7, 2000), "fam0007");
    }
}
