//! Sample pools and concrete per-split file lists.
//!
//! A pool file holds one record per line:
//!
//! ```text
//! sample_id<TAB>label<TAB>family_or_dash<TAB>origin
//! ```
//!
//! Malicious records name their family and use origin `-`. Benign records use
//! family `-` and origin `train` or `test`, so a split's test benign files
//! never come from the training benign population.
//!
//! [`materialize_split`] draws `train_per_family` samples from every training
//! family, `test_per_family` from every testing family, and the same number of
//! benign samples on each side.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::{index::sample, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{self, Document, RunManifest};
use crate::rng;
use crate::search::SplitSpec;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("sample id {id} appears more than once in the pool")]
    DuplicateId { id: String },
    #[error("family {0:?} is on both sides of the split")]
    OverlappingSpec(String),
    #[error("family {0:?} is not in the pool")]
    MissingFamily(String),
    #[error("family {family:?} has {available} samples, needs {needed} (short by {})", .needed - .available)]
    InsufficientSamples {
        family: String,
        needed: usize,
        available: usize,
    },
    #[error("{origin} benign pool has {available} samples, needs {needed}")]
    InsufficientBenign {
        origin: Origin,
        needed: usize,
        available: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ManifestError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Train,
    Test,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Train => "train",
            Origin::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenignSample {
    pub id: String,
    pub origin: Origin,
}

/// Family-keyed malicious samples plus origin-tagged benign samples.
///
/// Sample IDs are unique across the whole pool.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SamplePool {
    pub by_family: IndexMap<String, Vec<String>>,
    pub benign: Vec<BenignSample>,
}

impl SamplePool {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pool = SamplePool::default();
        let mut seen = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.is_empty() {
                continue;
            }
            let malformed = |msg: String| ManifestError::Malformed { line: line_no, msg };
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, label, family, origin] = fields[..] else {
                return Err(malformed(format!("expected 4 tab-separated fields, found {}", fields.len())));
            };
            if id.is_empty() {
                return Err(malformed("empty sample id".into()));
            }
            if !seen.insert(id.to_string()) {
                return Err(ManifestError::DuplicateId { id: id.to_string() });
            }
            match label {
                "malicious" => {
                    if family.is_empty() || family == "-" {
                        return Err(malformed("malicious record needs a family".into()));
                    }
                    if origin != "-" {
                        return Err(malformed(format!("malicious origin must be '-', got {origin:?}")));
                    }
                    pool.by_family
                        .entry(family.to_string())
                        .or_default()
                        .push(id.to_string());
                }
                "benign" => {
                    if family != "-" {
                        return Err(malformed(format!("benign family must be '-', got {family:?}")));
                    }
                    let origin = match origin {
                        "train" => Origin::Train,
                        "test" => Origin::Test,
                        other => {
                            return Err(malformed(format!(
                                "benign origin must be train or test, got {other:?}"
                            )))
                        }
                    };
                    pool.benign.push(BenignSample {
                        id: id.to_string(),
                        origin,
                    });
                }
                other => return Err(malformed(format!("unknown label {other:?}"))),
            }
        }
        Ok(pool)
    }

    /// Pool file text: families in pool order, then benign samples.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (family, ids) in &self.by_family {
            for id in ids {
                out.push_str(&format!("{id}\tmalicious\t{family}\t-\n"));
            }
        }
        for b in &self.benign {
            out.push_str(&format!("{}\tbenign\t-\t{}\n", b.id, b.origin));
        }
        out
    }

    pub fn benign_ids(&self, origin: Origin) -> Vec<&str> {
        self.benign
            .iter()
            .filter(|b| b.origin == origin)
            .map(|b| b.id.as_str())
            .collect()
    }

    /// A pool of synthetic hex-digest IDs for desk-scale runs.
    ///
    /// Every ID is the SHA-256 of a string naming its role, so pools built
    /// from the same arguments are identical.
    pub fn synthetic<S: AsRef<str>>(
        families: &[S],
        per_family: usize,
        benign_train: usize,
        benign_test: usize,
        seed: u64,
    ) -> Self {
        let id = |tag: String| report::sha256_hex(format!("{seed}:{tag}").as_bytes());
        let by_family = families
            .iter()
            .map(|f| {
                let f = f.as_ref();
                let ids = (0..per_family).map(|i| id(format!("mal:{f}:{i}"))).collect();
                (f.to_string(), ids)
            })
            .collect();
        let benign = (0..benign_train)
            .map(|i| BenignSample { id: id(format!("ben:train:{i}")), origin: Origin::Train })
            .chain((0..benign_test).map(|i| BenignSample {
                id: id(format!("ben:test:{i}")),
                origin: Origin::Test,
            }))
            .collect();
        Self { by_family, benign }
    }
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<SamplePool> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    SamplePool::parse(&text)
}

pub fn save_pool(pool: &SamplePool, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pool.to_text()).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub sample_id: String,
    pub label: Label,
    pub family: Option<String>,
}

impl Record {
    fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\n",
            self.sample_id,
            self.label.as_str(),
            self.family.as_deref().unwrap_or("-")
        )
    }

    fn parse_line(line: &str, line_no: usize) -> Result<Self> {
        let malformed = |msg: String| ManifestError::Malformed { line: line_no, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, label, family] = fields[..] else {
            return Err(malformed(format!("expected 3 tab-separated fields, found {}", fields.len())));
        };
        let label = match label {
            "benign" => Label::Benign,
            "malicious" => Label::Malicious,
            other => return Err(malformed(format!("unknown label {other:?}"))),
        };
        Ok(Record {
            sample_id: id.to_string(),
            label,
            family: (family != "-").then(|| family.to_string()),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train_total: usize,
    pub test_total: usize,
    pub train_malicious: usize,
    pub train_benign: usize,
    pub test_malicious: usize,
    pub test_benign: usize,
    pub per_family: IndexMap<String, usize>,
}

impl SplitCounts {
    pub fn tally(train: &[Record], test: &[Record]) -> Self {
        let mut c = SplitCounts {
            train_total: train.len(),
            test_total: test.len(),
            ..Self::default()
        };
        for (records, is_train) in [(train, true), (test, false)] {
            for r in records {
                match (r.label, is_train) {
                    (Label::Malicious, true) => c.train_malicious += 1,
                    (Label::Malicious, false) => c.test_malicious += 1,
                    (Label::Benign, true) => c.train_benign += 1,
                    (Label::Benign, false) => c.test_benign += 1,
                }
                if let Some(f) = &r.family {
                    *c.per_family.entry(f.clone()).or_default() += 1;
                }
            }
        }
        c
    }
}

/// Concrete train and test record lists for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterializedSplit {
    pub split_id: String,
    pub spec: SplitSpec,
    pub seed: u64,
    pub train_per_family: usize,
    pub test_per_family: usize,
    #[serde(skip)]
    pub train: Vec<Record>,
    #[serde(skip)]
    pub test: Vec<Record>,
    pub counts: SplitCounts,
}

pub const DEFAULT_TRAIN_PER_FAMILY: usize = 8000;
pub const DEFAULT_TEST_PER_FAMILY: usize = 2000;

fn draw_family(
    pool: &SamplePool,
    family: &str,
    n: usize,
    rng: &mut rng::Rng,
) -> Result<Vec<Record>> {
    let ids = pool
        .by_family
        .get(family)
        .ok_or_else(|| ManifestError::MissingFamily(family.to_string()))?;
    if ids.len() < n {
        return Err(ManifestError::InsufficientSamples {
            family: family.to_string(),
            needed: n,
            available: ids.len(),
        });
    }
    let mut shuffled: Vec<&String> = ids.iter().collect();
    shuffled.shuffle(rng);
    Ok(shuffled[..n]
        .iter()
        .map(|id| Record {
            sample_id: (*id).clone(),
            label: Label::Malicious,
            family: Some(family.to_string()),
        })
        .collect())
}

fn draw_benign(pool: &SamplePool, origin: Origin, n: usize, rng: &mut rng::Rng) -> Result<Vec<Record>> {
    let ids = pool.benign_ids(origin);
    if ids.len() < n {
        return Err(ManifestError::InsufficientBenign {
            origin,
            needed: n,
            available: ids.len(),
        });
    }
    let mut picked = sample(rng, ids.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| Record {
            sample_id: ids[i].to_string(),
            label: Label::Benign,
            family: None,
        })
        .collect())
}

/// Draws the concrete records of one split.
///
/// Each family's pool order is shuffled with the split's seed and its first
/// `n` IDs are taken. Benign samples are drawn without replacement from the
/// matching origin. Records are ordered malicious-by-family, then benign.
pub fn materialize_split(
    pool: &SamplePool,
    spec: &SplitSpec,
    split_id: impl Into<String>,
    train_per_family: usize,
    test_per_family: usize,
    seed: u64,
) -> Result<MaterializedSplit> {
    if let Some(f) = spec.train_families.iter().find(|f| spec.test_families.contains(f)) {
        return Err(ManifestError::OverlappingSpec(f.clone()));
    }
    let mut rng = rng::seeded(seed);
    let mut train = Vec::with_capacity(2 * train_per_family * spec.train_families.len());
    for family in &spec.train_families {
        train.extend(draw_family(pool, family, train_per_family, &mut rng)?);
    }
    let mut test = Vec::with_capacity(2 * test_per_family * spec.test_families.len());
    for family in &spec.test_families {
        test.extend(draw_family(pool, family, test_per_family, &mut rng)?);
    }
    let train_benign = draw_benign(pool, Origin::Train, train.len(), &mut rng)?;
    let test_benign = draw_benign(pool, Origin::Test, test.len(), &mut rng)?;
    train.extend(train_benign);
    test.extend(test_benign);

    Ok(MaterializedSplit {
        split_id: split_id.into(),
        spec: spec.clone(),
        seed,
        train_per_family,
        test_per_family,
        counts: SplitCounts::tally(&train, &test),
        train,
        test,
    })
}

pub const TRAIN_FILE: &str = "train.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const META_FILE: &str = "meta.json";

fn records_text(records: &[Record]) -> String {
    let mut out = String::with_capacity(records.len() * 80);
    for r in records {
        out.push_str(&r.to_line());
    }
    out
}

/// Writes `train.tsv`, `test.tsv` and `meta.json` into `dir`, creating it.
pub fn write_split(ms: &MaterializedSplit, dir: impl AsRef<Path>, manifest: Option<&RunManifest>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let train = dir.join(TRAIN_FILE);
    fs::write(&train, records_text(&ms.train)).map_err(io_err(&train))?;
    let test = dir.join(TEST_FILE);
    fs::write(&test, records_text(&ms.test)).map_err(io_err(&test))?;
    let meta = dir.join(META_FILE);
    report::write_json(&Document::new(ms, manifest.cloned()), &meta).map_err(io_err(&meta))
}

fn read_records(path: &Path) -> Result<Vec<Record>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| Record::parse_line(l, i + 1))
        .collect()
}

/// Reads a directory written by [`write_split`].
pub fn load_split(dir: impl AsRef<Path>) -> Result<MaterializedSplit> {
    let dir = dir.as_ref();
    let meta = dir.join(META_FILE);
    let doc: Document<MaterializedSplit> = report::read_json(&meta).map_err(io_err(&meta))?;
    let mut ms = doc.body;
    ms.train = read_records(&dir.join(TRAIN_FILE))?;
    ms.test = read_records(&dir.join(TEST_FILE))?;
    Ok(ms)
}
