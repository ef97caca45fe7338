//! CSV and JSON files.
//!
//! Point files carry a header `x0,…,x{d−1}` with an optional trailing `label`
//! column. Cost and factor files are headerless rows of floats.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub struct PointFile {
    pub points: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

fn reader(path: &Path, headers: bool) -> CliResult<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .from_path(path)
        .map_err(|e| CliError::parse(path, e))
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::parse(path, e))
}

fn num(path: &Path, row: usize, field: &str) -> CliResult<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| CliError::parse(path, format!("row {}: `{field}` is not a number", row + 1)))?;
    if !v.is_finite() {
        return Err(CliError::parse(path, format!("row {}: non-finite value", row + 1)));
    }
    Ok(v)
}

pub fn read_points(path: &Path) -> CliResult<PointFile> {
    let mut rdr = reader(path, true)?;
    let header = rdr.headers().map_err(|e| CliError::parse(path, e))?.clone();
    let has_label = header.iter().next_back() == Some("label");
    let d = header.len() - usize::from(has_label);
    for (t, name) in header.iter().take(d).enumerate() {
        if name != format!("x{t}") {
            return Err(CliError::parse(path, format!("unexpected column `{name}`")));
        }
    }
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        for t in 0..d {
            coords.push(num(path, row, &rec[t])?);
        }
        if has_label {
            let l = rec[d]
                .trim()
                .parse()
                .map_err(|_| CliError::parse(path, format!("row {}: bad label", row + 1)))?;
            labels.push(l);
        }
    }
    let n = coords.len() / d.max(1);
    Ok(PointFile {
        points: DMatrix::from_row_slice(n, d, &coords),
        labels: has_label.then_some(labels),
    })
}

pub fn write_points(path: &Path, points: &DMatrix<f64>, labels: Option<&[usize]>) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = (0..points.ncols()).map(|t| format!("x{t}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(|e| CliError::parse(path, e))?;
    for i in 0..points.nrows() {
        let mut rec: Vec<String> = points.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(|e| CliError::parse(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_matrix(path: &Path) -> CliResult<DMatrix<f64>> {
    let mut rdr = reader(path, false)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::parse(path, e))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(CliError::parse(path, format!("row {} has {} fields", row + 1, rec.len())));
        }
        for f in rec.iter() {
            data.push(num(path, row, f)?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, cols.unwrap_or(0), &data))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| CliError::parse(path, e))?;
    for row in m.row_iter() {
        let rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        w.write_record(&rec).map_err(|e| CliError::parse(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Single-column weights, normalized on read.
pub fn read_weights(path: &Path) -> CliResult<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() != 1 {
        return Err(CliError::parse(path, "expected one column of weights"));
    }
    Ok(m.iter().copied().collect())
}

pub fn write_rows<S: Serialize>(path: Option<&Path>, rows: &[S]) -> CliResult<()> {
    let sink: Box<dyn std::io::Write> = match path {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout()),
    };
    let label = path.unwrap_or(Path::new("<stdout>"));
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::parse(label, e))?;
    }
    w.flush().map_err(|e| CliError::io(label, e))
}

pub fn write_json<S: Serialize>(path: Option<&Path>, value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable report");
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(|e| CliError::io(p, e)),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}
