//! Shared structured-text output: JSON documents with an embedded run
//! manifest, plus two-column plot-data tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Provenance block embedded in every output.
///
/// It records what determines the output and nothing else: no timestamps,
/// hostnames or paths. Inputs are identified by role and content digest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub input_digests: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            tool_version: format!("famsplit {}", env!("CARGO_PKG_VERSION")),
            ..Self::default()
        }
    }

    pub fn flag(mut self, name: &str, value: impl ToString) -> Self {
        self.flags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seeds.push(seed);
        self
    }

    pub fn input(mut self, role: &str, bytes: &[u8]) -> Self {
        self.input_digests.insert(role.to_string(), sha256_hex(bytes));
        self
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A report body with an optional manifest, serialized as one flat object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Document<T> {
    pub fn new(body: T, manifest: Option<RunManifest>) -> Self {
        Self { manifest, body }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> std::io::Result<()> {
    let text = to_json(value).map_err(std::io::Error::other)?;
    fs::write(path, text)
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> std::io::Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// `x<TAB>y` lines under an `x<TAB>y` header.
pub fn plot_data<X: std::fmt::Display>(points: &[(X, f64)]) -> String {
    let mut out = String::from("x\ty\n");
    for (x, y) in points {
        writeln!(out, "{x}\t{y:.6}").expect("writing to a String");
    }
    out
}
