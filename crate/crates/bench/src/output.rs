//! CSV result files. Every row starts with a schema version; appending to a
//! file whose header differs from the row type's header is refused.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ThroughputRow {
    pub schema_version: u32,
    pub experiment: &'static str,
    pub mode: String,
    pub partitions: usize,
    pub z: Option<f64>,
    pub rep: usize,
    pub tuples: u64,
    pub seconds: f64,
    pub updates_per_second: f64,
    pub f1_queries: u64,
    pub f2_queries: u64,
    pub point_queries: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LatencyRow {
    pub schema_version: u32,
    pub query: &'static str,
    pub mode: String,
    pub partitions: usize,
    pub z: Option<f64>,
    pub samples: usize,
    pub p50_ns: u64,
    pub p90_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
    pub mean_ns: f64,
    pub max_retries: u64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct AccuracyRow {
    pub schema_version: u32,
    pub method: &'static str,
    pub partitions: usize,
    pub z: Option<f64>,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub estimate: u64,
    pub oracle: u64,
    pub mape: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct IvlRow {
    pub schema_version: u32,
    pub query: &'static str,
    pub mode: String,
    pub partitions: usize,
    pub z: Option<f64>,
    pub rep: usize,
    pub trigger: u64,
    pub q_start: u64,
    pub q_value: u64,
    pub q_end: u64,
}

impl IvlRow {
    pub fn width(&self) -> u64 {
        self.q_end.abs_diff(self.q_start)
    }

    pub fn in_interval(&self) -> bool {
        let (lo, hi) = (self.q_start.min(self.q_end), self.q_start.max(self.q_end));
        (lo..=hi).contains(&self.q_value)
    }
}

fn header_of<T: Serialize>(row: &T) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
    w.serialize(row)?;
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    let text = String::from_utf8(bytes)?;
    Ok(text.lines().next().unwrap_or_default().to_string())
}

/// Appends `rows` to `path`, writing the header only if the file is new or
/// empty.
pub fn append_rows<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let Some(first) = rows.first() else { return Ok(()) };
    let header = header_of(first)?;
    let existing = match File::open(path) {
        Ok(f) => BufReader::new(f).lines().next().transpose()?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(e.into()),
    };
    let fresh = match existing {
        None => true,
        Some(line) if line.trim().is_empty() => true,
        Some(line) if line == header => false,
        Some(line) => bail!("{} has header {line:?}, expected {header:?}", path.display()),
    };
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows with a header to `out`.
pub fn write_rows<T: Serialize>(out: impl Write, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
