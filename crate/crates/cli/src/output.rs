//! Row types and writers. Every row carries the seed and resolved-config hash.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use risuav::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// One row of a frame trace: a single pair in a single frame.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct FrameRow {
    pub seed: u64,
    pub config_hash: String,
    pub solver: String,
    pub frame: usize,
    pub pair: usize,
    pub uav_x: f64,
    pub uav_y: f64,
    pub uav_z: f64,
    pub user_x: f64,
    pub user_y: f64,
    pub user_z: f64,
    pub assisted: u8,
    pub group: usize,
    pub snr: f64,
    pub rate_bps: f64,
    pub r_overall: f64,
    pub p_overall: f64,
    pub s_overall: f64,
    pub negotiation_s: f64,
    pub evaluated: usize,
    pub iterations: usize,
}

pub const FRAME_COLUMNS: &[&str] = &[
    "seed",
    "config_hash",
    "solver",
    "frame",
    "pair",
    "uav_x",
    "uav_y",
    "uav_z",
    "user_x",
    "user_y",
    "user_z",
    "assisted",
    "group",
    "snr",
    "rate_bps",
    "r_overall",
    "p_overall",
    "s_overall",
    "negotiation_s",
    "evaluated",
    "iterations",
];

/// Long-format result row: one metric value per line.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub scheme: String,
    /// Empty for rows that aggregate over frames.
    pub frame: Option<usize>,
    /// Empty for rows that cover all pairs.
    pub pair: Option<usize>,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub config_hash: String,
}

pub const RESULT_COLUMNS: &[&str] = &[
    "experiment",
    "sweep_var",
    "sweep_value",
    "scheme",
    "frame",
    "pair",
    "metric",
    "value",
    "seed",
    "config_hash",
];

/// Deterministic merge order for rows produced by parallel workers.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.scheme.cmp(&b.scheme))
            .then_with(|| a.frame.cmp(&b.frame))
            .then_with(|| a.pair.cmp(&b.pair))
            .then_with(|| a.metric.cmp(&b.metric))
    });
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Format(format!("json: {e}"))
}

/// Header first, so an empty table still has one.
pub fn write_csv<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(columns)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(json_error)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `rows` as `<dir>/<stem>.<ext>` and returns the path.
pub fn write_table<T: Serialize>(dir: &Path, stem: &str, format: Format, columns: &[&str], rows: &[T]) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    match format {
        Format::Csv => write_csv(&path, columns, rows)?,
        Format::Json => write_json(&path, rows)?,
    }
    Ok(path)
}
