use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tagtrust::ingest::{DatasetStats, FieldLayout};

pub const FORMAT: &str = "tagtrust-manifest v1";
pub const FILE_NAME: &str = "manifest.json";

/// Everything that decides which transactions land in which half of the
/// split. Scoring switches are free to change between ingest and evaluate.
#[derive(Debug, Serialize)]
pub struct SplitSettings {
    pub layout: FieldLayout,
    pub header: String,
    pub min_taggers: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSettings {
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("split settings serialize");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub input: String,
    pub input_sha256: String,
    /// Counts before rare-item filtering.
    pub raw: DatasetStats,
    pub filtered_transactions: usize,
    pub filtered_users: usize,
    pub filtered_items: usize,
    pub training_transactions: usize,
    pub training_users: usize,
    pub testing_transactions: usize,
    pub min_taggers: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub store_backend: String,
    pub shard_count: usize,
    pub config_hash: String,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(FILE_NAME);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let manifest: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        anyhow::ensure!(manifest.format == FORMAT, "unsupported manifest format {:?}", manifest.format);
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
