//! Cascade files, dataset manifests and the train/validation/test split.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hienet_core::{parse_cascade_line, stable_hash, CascadeRecord};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const CASCADES_FILE: &str = "cascades.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeUnit {
    Seconds,
    Years,
}

/// Summary statistics the synthetic generator records next to its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStats {
    pub seed: u64,
    pub cascades: usize,
    pub users: usize,
    pub max_final_size: u64,
    pub median_final_size: u64,
    /// `max / max(median, 1)` of final sizes.
    pub tail_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub time_unit: TimeUnit,
    /// Time after publication at which `final_size` was measured.
    pub label_horizon: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorStats>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
    pub records: Vec<CascadeRecord>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
        let records = read_cascades(&dir.join(CASCADES_FILE))?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            manifest,
            records,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
        write_manifest(&dir.join(MANIFEST_FILE), &self.manifest)?;
        write_cascades(&dir.join(CASCADES_FILE), &self.records)
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(HarnessError::io(path))?;
    serde_json::from_str(&text).map_err(HarnessError::json(path))
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest).map_err(HarnessError::json(path))?;
    text.push('\n');
    fs::write(path, text).map_err(HarnessError::io(path))
}

/// Reads one record per non-blank line. Errors carry the 1-based line.
pub fn read_cascades(path: &Path) -> Result<Vec<CascadeRecord>> {
    let file = fs::File::open(path).map_err(HarnessError::io(path))?;
    parse_cascades(BufReader::new(file), path)
}

pub fn parse_cascades(reader: impl BufRead, path: &Path) -> Result<Vec<CascadeRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(HarnessError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_cascade_line(&line, i + 1).map_err(|source| HarnessError::Data {
            path: path.to_path_buf(),
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_cascades(path: &Path, records: &[CascadeRecord]) -> Result<()> {
    let file = fs::File::create(path).map_err(HarnessError::io(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", r.to_line()).map_err(HarnessError::io(path))?;
    }
    out.flush().map_err(HarnessError::io(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// 80/10/10 by a stable hash of the message id.
pub fn split_of(message_id: &str) -> Split {
    match stable_hash(message_id.as_bytes()) % 10 {
        0..=7 => Split::Train,
        8 => Split::Validation,
        _ => Split::Test,
    }
}
