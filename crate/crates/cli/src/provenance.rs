use std::collections::hash_map::RandomState;
use std::collections::BTreeMap;
use std::hash::{BuildHasher, Hasher};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{Cli, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Entropy,
}

/// The `--seed` value, or a fresh one from the process's hash-map keys.
pub fn resolve_seed(flag: Option<u64>) -> (u64, SeedSource) {
    match flag {
        Some(s) => (s, SeedSource::Flag),
        None => {
            let mut h = RandomState::new().build_hasher();
            h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos()));
            (h.finish(), SeedSource::Entropy)
        }
    }
}

/// Contents of `run.json`: enough to replay the invocation exactly.
#[derive(Debug, Serialize)]
pub struct RunRecord<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub args: &'a Cli,
    pub seed: u64,
    pub seed_source: SeedSource,
    /// sha256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub summary: Value,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn write_record(dir: &Path, rec: &RunRecord<'_>) -> Result<(), CliError> {
    let path = dir.join("run.json");
    let text = serde_json::to_string_pretty(rec).expect("run record serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}
