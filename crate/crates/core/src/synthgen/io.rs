use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::GenConfig;
use super::domain::ReportRecord;
use super::validate::AuditReport;
use super::SynthError;
use crate::util::{json_hash, sha256_hex};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub n: usize,
    pub year: i32,
    pub risk_dist: [f64; 3],
    pub seed: u64,
    pub config_hash: String,
    pub data_sha256: String,
    pub risk_counts: BTreeMap<String, usize>,
    pub category_counts: BTreeMap<String, usize>,
    pub audit: AuditReport,
}

impl DatasetMetadata {
    pub fn new(
        records: &[ReportRecord],
        year: i32,
        risk_dist: [f64; 3],
        seed: u64,
        cfg: &GenConfig,
        audit: AuditReport,
    ) -> Result<Self, SynthError> {
        let mut risk_counts = BTreeMap::new();
        let mut category_counts = BTreeMap::new();
        for r in records {
            *risk_counts.entry(r.risk.name().to_string()).or_insert(0) += 1;
            *category_counts.entry(r.category.name().to_string()).or_insert(0) += 1;
        }
        Ok(Self {
            n: records.len(),
            year,
            risk_dist,
            seed,
            config_hash: json_hash(cfg),
            data_sha256: sha256_hex(&to_ndjson(records)?),
            risk_counts,
            category_counts,
            audit,
        })
    }
}

pub fn to_ndjson(records: &[ReportRecord]) -> Result<Vec<u8>, SynthError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn write_ndjson(path: &Path, records: &[ReportRecord]) -> Result<(), SynthError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&to_ndjson(records)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_ndjson(path: &Path) -> Result<Vec<ReportRecord>, SynthError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SynthError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// `data.ndjson` -> `data.meta.json`.
pub fn metadata_path(data: &Path) -> PathBuf {
    data.with_extension("meta.json")
}

pub fn write_metadata(path: &Path, meta: &DatasetMetadata) -> Result<(), SynthError> {
    fs::write(path, serde_json::to_vec_pretty(meta)?)?;
    Ok(())
}
