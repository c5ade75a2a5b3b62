//! Labeled feature tables on disk.

use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use jedi_core::model::{max_unit_deviation, Example, Label, TeachingPool, UNIT_SPHERE_TOL};
use serde::Serialize;

use crate::error::{Error, Result};

/// Summary of a loaded table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CsvReport {
    pub rows: usize,
    pub dimension: usize,
    pub positives: usize,
    pub negatives: usize,
    pub unit_sphere: bool,
    pub max_unit_deviation: f64,
}

impl CsvReport {
    pub fn of(examples: &[Example]) -> Self {
        let positives = examples.iter().filter(|e| e.y == Label::Pos).count();
        let dev = max_unit_deviation(examples);
        CsvReport {
            rows: examples.len(),
            dimension: examples.first().map_or(0, |e| e.x.len()),
            positives,
            negatives: examples.len() - positives,
            unit_sphere: dev <= UNIT_SPHERE_TOL,
            max_unit_deviation: dev,
        }
    }
}

fn parse_label(s: &str) -> Option<Label> {
    match s.trim() {
        "1" | "+1" | "1.0" => Some(Label::Pos),
        "-1" | "0" | "-1.0" | "0.0" => Some(Label::Neg),
        _ => None,
    }
}

/// Read `id,label,f1..fm` rows, with an optional trailing `payload` column.
///
/// Labels are `-1`/`1` or `0`/`1`, with `0` read as negative. Row numbers in
/// errors count the header as row 1.
pub fn read_examples(path: &Path) -> Result<Vec<Example>> {
    let bad = |row: usize, msg: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(file);
    let header = rdr.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.len() < 3 || &header[0] != "id" || &header[1] != "label" {
        return Err(bad(1, "header must start with `id,label` and name at least one feature".into()));
    }
    let has_payload = &header[header.len() - 1] == "payload";
    let dim = header.len() - 2 - usize::from(has_payload);
    if dim == 0 {
        return Err(bad(1, "no feature columns".into()));
    }

    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| bad(row, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(bad(row, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(bad(row, "empty id".into()));
        }
        if let Some(first) = seen.insert(id.clone(), row) {
            return Err(bad(row, format!("duplicate id `{id}` (first seen on row {first})")));
        }
        let y = parse_label(&rec[1]).ok_or_else(|| bad(row, format!("label `{}` is not one of -1, 0, 1", &rec[1])))?;
        let mut x = Vec::with_capacity(dim);
        for k in 0..dim {
            let s = &rec[2 + k];
            let v: f64 = s.parse().map_err(|_| bad(row, format!("feature `{}` is not numeric: `{s}`", &header[2 + k])))?;
            if !v.is_finite() {
                return Err(bad(row, format!("feature `{}` is not finite", &header[2 + k])));
            }
            x.push(v);
        }
        let mut e = Example::new(id, x, y);
        if has_payload && !rec[header.len() - 1].is_empty() {
            e.payload = Some(rec[header.len() - 1].to_string());
        }
        out.push(e);
    }
    if out.is_empty() {
        return Err(bad(2, "no data rows".into()));
    }
    let pos = out.iter().filter(|e| e.y == Label::Pos).count();
    if pos == 0 || pos == out.len() {
        return Err(Error::Validation(format!("{}: all rows share one class", path.display())));
    }
    Ok(out)
}

/// Load a file as a validated teaching pool.
pub fn load_csv(path: &Path) -> Result<(TeachingPool, CsvReport)> {
    let examples = read_examples(path)?;
    let report = CsvReport::of(&examples);
    Ok((TeachingPool::new(examples)?, report))
}

/// Write examples in the format [`read_examples`] accepts. Features are
/// printed with round-trip precision.
pub fn write_examples(path: &Path, examples: &[Example]) -> Result<()> {
    let dim = examples.first().map_or(0, |e| e.x.len());
    let with_payload = examples.iter().any(|e| e.payload.is_some());
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((1..=dim).map(|k| format!("f{k}")));
    if with_payload {
        header.push("payload".into());
    }
    w.write_record(&header).map_err(io)?;
    for e in examples {
        let mut rec = vec![e.id.clone(), format!("{}", e.y.sign() as i32)];
        rec.extend(e.x.iter().map(|v| format!("{v:?}")));
        if with_payload {
            rec.push(e.payload.clone().unwrap_or_default());
        }
        w.write_record(&rec).map_err(io)?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    inner.flush().map_err(|e| Error::io(path, e))
}
