//! Dataset CSV format: header `f0,...,f{d-1},label`, one row per point,
//! label column holding a nonnegative integer or the empty string for
//! unlabeled rows. Floats are written in shortest round-trip decimal form,
//! so save → load reproduces every bit.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let d = dataset.dim();
    let mut out = String::new();
    for c in 0..d {
        out.push_str(&format!("f{c},"));
    }
    out.push_str("label\n");
    for r in 0..dataset.len() {
        for v in dataset.features.row(r) {
            out.push_str(&format!("{v},"));
        }
        match dataset.labels[r] {
            Some(c) => out.push_str(&format!("{c}\n")),
            None => out.push('\n'),
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads a dataset CSV.
///
/// The class count is inferred as `max(label) + 1` and the feature range
/// as the observed min/max, so a saved dataset whose extremes are attained
/// round-trips exactly.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[cols.len() - 1] != "label" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header must be f0,...,f{{d-1}},label; got {header:?}"),
        });
    }
    let d = cols.len() - 1;
    for (i, col) in cols[..d].iter().enumerate() {
        if *col != format!("f{i}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column f{i}, got {col:?}"),
            });
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<Option<usize>> = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} columns, got {}", d + 1, fields.len()),
            });
        }
        let mut row = Vec::with_capacity(d);
        for f in &fields[..d] {
            row.push(f.parse::<f64>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad float {f:?}: {e}"),
            })?);
        }
        let label = match fields[d] {
            "" => None,
            s => Some(s.parse::<usize>().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad label {s:?}: {e}"),
            })?),
        };
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }

    let num_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let lo = rows.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
    let hi = rows
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    Dataset::new(Tensor::from_rows(&rows)?, labels, num_classes, (lo, hi))
}
