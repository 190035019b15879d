//! Raw trace file format.
//!
//! Traces are CSV with header
//! `time_ms,device_id,link_id,freq_index,cqi_type,re,im`; RSSI rows put
//! the dBm value in `re` and 0 in `im`. Floats are printed with the
//! shortest round-trip decimal representation, UTF-8, LF line endings.
//! Ground truth sits next to the trace as `truth.csv` with header
//! `window_start_ms,label`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use radiosense_core::cqi::{CqiSample, CqiSeries, CqiType};

use crate::{PlatformError, Result};

/// One trace row, in file column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_ms: i64,
    pub device_id: String,
    pub link_id: u32,
    pub freq_index: u16,
    pub cqi_type: CqiType,
    pub re: f64,
    pub im: f64,
}

impl TraceRow {
    pub fn to_sample(&self) -> CqiSample {
        CqiSample {
            time_ms: self.time_ms,
            freq_index: self.freq_index,
            link_id: self.link_id,
            cqi_type: self.cqi_type,
            value: Complex64::new(self.re, self.im),
        }
    }

    pub fn from_sample(device_id: &str, s: &CqiSample) -> Self {
        TraceRow {
            time_ms: s.time_ms,
            device_id: device_id.to_string(),
            link_id: s.link_id,
            freq_index: s.freq_index,
            cqi_type: s.cqi_type,
            re: s.value.re,
            im: s.value.im,
        }
    }

    /// Parse one CSV line (no header). Used by the live TCP ingest
    /// path, which shares the file format line by line.
    pub fn parse_line(line: &str) -> Result<TraceRow> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 7 {
            return Err(PlatformError::format("trace row", "expected 7 fields"));
        }
        let parse_err = |what: &str| PlatformError::format("trace row", what);
        Ok(TraceRow {
            time_ms: fields[0].parse().map_err(|_| parse_err("time_ms"))?,
            device_id: fields[1].to_string(),
            link_id: fields[2].parse().map_err(|_| parse_err("link_id"))?,
            freq_index: fields[3].parse().map_err(|_| parse_err("freq_index"))?,
            cqi_type: fields[4].parse().map_err(|_| parse_err("cqi_type"))?,
            re: fields[5].parse().map_err(|_| parse_err("re"))?,
            im: fields[6].parse().map_err(|_| parse_err("im"))?,
        })
    }
}

/// Write a full trace file.
pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| PlatformError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)
            .map_err(|e| PlatformError::format("trace row", e))?;
    }
    w.flush().map_err(|e| PlatformError::io(path, e))?;
    Ok(())
}

/// Read a trace file, skipping malformed rows.
///
/// Returns the parsed rows plus the count of rows skipped; a damaged
/// row never aborts the read.
pub fn read_trace(path: &Path) -> Result<(Vec<TraceRow>, u64)> {
    let file = File::open(path).map_err(|e| PlatformError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    let mut skipped = 0u64;
    for record in reader.deserialize::<TraceRow>() {
        match record {
            Ok(row) => rows.push(row),
            Err(_) => skipped += 1,
        }
    }
    Ok((rows, skipped))
}

/// Assemble an aggregate series from trace rows.
///
/// The gateway treats the whole monitored link set as one logical
/// view: every row whose `link_id` is in `link_ids` lands in one
/// series labeled `device_id`.
pub fn series_from_rows(
    device_id: &str,
    rows: &[TraceRow],
    cqi_type: CqiType,
    sampling_ms: u32,
    freq_count: u16,
    link_ids: &[u32],
) -> Result<CqiSeries> {
    let wanted: std::collections::BTreeSet<u32> = link_ids.iter().copied().collect();
    let samples: Vec<CqiSample> = rows
        .iter()
        .filter(|r| r.cqi_type == cqi_type && wanted.contains(&r.link_id))
        .map(TraceRow::to_sample)
        .collect();
    CqiSeries::new(
        device_id,
        cqi_type,
        sampling_ms,
        freq_count,
        link_ids.to_vec(),
        samples,
    )
    .map_err(Into::into)
}

/// One ground-truth row: latent label at a window start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub window_start_ms: i64,
    pub label: String,
}

pub fn write_truth(path: &Path, rows: &[TruthRow]) -> Result<()> {
    let file = File::create(path).map_err(|e| PlatformError::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row)
            .map_err(|e| PlatformError::format("truth row", e))?;
    }
    w.flush().map_err(|e| PlatformError::io(path, e))?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let file = File::open(path).map_err(|e| PlatformError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for record in reader.deserialize::<TruthRow>() {
        rows.push(record.map_err(|e| PlatformError::format("truth row", e))?);
    }
    Ok(rows)
}

/// Append-friendly CSV writer used for estimate/latency logs: each row
/// is flushed as written so a partial file stays valid.
pub struct CsvLog {
    inner: csv::Writer<File>,
}

impl CsvLog {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::create(path).map_err(|e| PlatformError::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner
            .write_record(header)
            .map_err(|e| PlatformError::format("csv header", e))?;
        inner
            .flush()
            .map_err(|e| PlatformError::format("csv flush", e))?;
        Ok(CsvLog { inner })
    }

    pub fn write(&mut self, fields: &[String]) -> Result<()> {
        self.inner
            .write_record(fields)
            .map_err(|e| PlatformError::format("csv row", e))?;
        self.inner
            .flush()
            .map_err(|e| PlatformError::format("csv flush", e))?;
        Ok(())
    }
}

/// Shortest round-trip decimal for a float, as used in CSV logs.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
