//! Line-delimited training metrics log.
//!
//! One JSON object per training step, no timestamps or other
//! run-varying fields, so two runs from the same seed produce
//! byte-identical logs. Per-stream terms are keyed by stream name in
//! sorted maps, keeping serialization order independent of config
//! order.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use masr_core::step::LossReport;

use crate::error::{io_err, MasrError, Result};

/// One logged training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: u64,
    /// 1 while only the self-supervised loss trains, 2 afterwards.
    pub phase: u8,
    pub l_ssl: f64,
    /// Unweighted per-stream metadata losses.
    pub l_meta: BTreeMap<String, f64>,
    pub l_masr: f64,
    /// Per-stream fraction of anchors whose hardest negative moves when
    /// mining on p rather than q alone.
    pub change_rate: BTreeMap<String, f64>,
}

impl LogRecord {
    pub fn from_report(step: u64, phase: u8, report: &LossReport) -> Self {
        LogRecord {
            step,
            phase,
            l_ssl: report.l_ssl,
            l_meta: report
                .streams
                .iter()
                .map(|s| (s.name.clone(), s.l_meta))
                .collect(),
            l_masr: report.l_masr,
            change_rate: report
                .streams
                .iter()
                .map(|s| (s.name.clone(), s.change_rate))
                .collect(),
        }
    }
}

/// Append-only metrics writer. Lines are flushed per record so a partial
/// run still leaves a readable prefix.
pub struct MetricsLog {
    out: BufWriter<File>,
}

impl MetricsLog {
    /// Start a fresh log, truncating any existing file.
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(io_err(path))?;
        Ok(MetricsLog { out: BufWriter::new(file) })
    }

    /// Continue an interrupted run's log.
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err(path))?;
        Ok(MetricsLog { out: BufWriter::new(file) })
    }

    pub fn write(&mut self, record: &LogRecord) -> Result<()> {
        let line = serde_json::to_string(record).expect("log record serializes");
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .and_then(|_| self.out.flush())
            .map_err(|e| MasrError::Io { path: "metrics log".into(), source: e })
    }
}

/// Read a whole metrics log back, with line-accurate parse errors.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| MasrError::Parse {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
