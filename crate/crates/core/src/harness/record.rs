//! Run records and their CSV / JSON forms.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::experiment::Derived;
use crate::algorithms::RunSummary;
use crate::error::{Error, Result};
use crate::metrics::MetricsRow;

pub const CSV_COLUMNS: [&str; 7] = ["iter", "sim_time_s", "loss", "gap", "consensus", "grad_norm_sq", "bytes"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Canonical configuration text; re-parses to the config that produced this.
    pub config: String,
    pub derived: Derived,
    pub rows: Vec<MetricsRow>,
    pub summary: RunSummary,
    pub final_models: Vec<Vec<f64>>,
    /// SHA-256 (hex) of the final models, little-endian `f64`s in node order.
    pub final_models_digest: String,
    /// Host time spent simulating; the only non-deterministic field.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }
}

pub fn models_digest(models: &[Vec<f64>]) -> String {
    let mut h = Sha256::new();
    for x in models {
        for v in x {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

impl RunRecord {
    /// Hash of everything except wall time; equal for equal runs.
    pub fn content_digest(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.config.as_bytes());
        h.update(serde_json::to_vec(&self.derived)?);
        h.update(rows_to_csv(&self.rows)?);
        h.update(serde_json::to_vec(&self.summary)?);
        h.update(self.final_models_digest.as_bytes());
        Ok(hex::encode(h.finalize()))
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        rows_to_csv(&self.rows)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Metrics rows as CSV with the fixed column set; an absent gap is empty.
pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            num(r.sim_time_s),
            num(r.loss),
            r.gap.map(num).unwrap_or_default(),
            num(r.consensus),
            num(r.grad_norm_sq),
            r.bytes.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Parses CSV written by [`rows_to_csv`].
pub fn rows_from_csv(bytes: &[u8]) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::invalid(format!("unexpected CSV columns {header:?}")));
    }
    let bad = |line: usize, what: &str| Error::invalid(format!("CSV row {line}: bad {what}"));
    let mut rows = Vec::new();
    for (idx, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = idx + 2;
        let f = |k: usize, what: &str| rec[k].parse::<f64>().map_err(|_| bad(line, what));
        rows.push(MetricsRow {
            iter: rec[0].parse().map_err(|_| bad(line, "iter"))?,
            sim_time_s: f(1, "sim_time_s")?,
            loss: f(2, "loss")?,
            gap: if rec[3].is_empty() { None } else { Some(f(3, "gap")?) },
            consensus: f(4, "consensus")?,
            grad_norm_sq: f(5, "grad_norm_sq")?,
            bytes: rec[6].parse().map_err(|_| bad(line, "bytes"))?,
        });
    }
    Ok(rows)
}

pub fn write_record(record: &RunRecord, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => record.to_csv()?,
        Format::Json => record.to_json()?,
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Reads a JSON record.
pub fn read_record(path: &Path) -> Result<RunRecord> {
    let bytes = fs::read(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}
