//! Per-run trace files and the run manifest.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use jedi_core::teacher::TeachingRun;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 6] = ["iter", "example_id", "learner_label", "true_label", "objective", "dist_sq_to_target"];

/// One row of a trace file. Row 0 holds the initial distance and no example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub example_id: String,
    pub learner_label: Option<i8>,
    pub true_label: Option<i8>,
    pub objective: Option<f64>,
    pub dist_sq_to_target: f64,
}

pub fn trace_rows(run: &TeachingRun) -> Vec<TraceRow> {
    let mut rows = vec![TraceRow {
        iter: 0,
        example_id: String::new(),
        learner_label: None,
        true_label: None,
        objective: None,
        dist_sq_to_target: run.concept_trace[0],
    }];
    for (e, d) in run.events.iter().zip(&run.concept_trace[1..]) {
        rows.push(TraceRow {
            iter: e.step,
            example_id: e.example_id.clone(),
            learner_label: Some(e.learner_label.sign() as i8),
            true_label: Some(e.true_label.sign() as i8),
            objective: e.objective_value,
            dist_sq_to_target: *d,
        });
    }
    rows
}

pub fn write_trace(path: &Path, run: &TeachingRun) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(TRACE_HEADER).map_err(io)?;
    for r in trace_rows(run) {
        let opt_i = |v: Option<i8>| v.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([
            r.iter.to_string(),
            r.example_id,
            opt_i(r.learner_label),
            opt_i(r.true_label),
            r.objective.map(|v| format!("{v:?}")).unwrap_or_default(),
            format!("{:?}", r.dist_sq_to_target),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: i + 2,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Append serializable records to a JSON-lines file.
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            row: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
