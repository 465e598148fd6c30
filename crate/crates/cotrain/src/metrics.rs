//! Per-epoch diagnostics: error rates, loss means, agreement, and the
//! adversarial-transfer signals used to detect view collapse.
//!
//! Collapse is operationalized as the mean off-diagonal adversarial
//! transfer rate: when every example that fools one view also fools the
//! others, the views have become interchangeable and the whole point of
//! keeping several of them is gone. The diagonal of the transfer matrix is
//! each view's self-attack success rate.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::adversarial::transfer_rate;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ViewModel;
use crate::tensor::Tensor;

/// Default number of probe rows used for transfer diagnostics.
pub const PROBE_SIZE: usize = 256;

/// Everything the per-epoch evaluation needs besides the views.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub test: Dataset,
    /// Fixed seeded subsample of test rows used for transfer diagnostics.
    pub probe: Tensor,
    pub epsilon: f64,
    pub feature_range: (f64, f64),
}

impl EvalContext {
    pub fn new(test: Dataset, probe_seed: u64, epsilon: f64) -> Result<Self> {
        if !test.fully_labeled() {
            return Err(Error::Config(
                "evaluation requires a labeled test set".into(),
            ));
        }
        let probe = probe_rows(&test, PROBE_SIZE, probe_seed)?;
        let feature_range = test.feature_range;
        Ok(Self {
            test,
            probe,
            epsilon,
            feature_range,
        })
    }
}

/// Seeded subsample of up to `k` feature rows, without replacement.
pub fn probe_rows(dataset: &Dataset, k: usize, seed: u64) -> Result<Tensor> {
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut StdRng::seed_from_u64(seed));
    idx.truncate(k.min(n));
    idx.sort_unstable();
    let rows: Vec<Vec<f64>> = idx
        .iter()
        .map(|&r| dataset.features.row(r).to_vec())
        .collect();
    Tensor::from_rows(&rows)
}

/// Full n×n cross-view transfer matrix on a probe batch.
pub fn transfer_matrix(
    views: &[ViewModel],
    probe: &Tensor,
    epsilon: f64,
    feature_range: (f64, f64),
) -> Result<Vec<Vec<f64>>> {
    let n = views.len();
    let mut m = vec![vec![0.0; n]; n];
    for (i, attacker) in views.iter().enumerate() {
        for (j, victim) in views.iter().enumerate() {
            m[i][j] = transfer_rate(attacker, victim, probe, epsilon, feature_range)?;
        }
    }
    Ok(m)
}

/// Mean off-diagonal entry of a transfer matrix.
pub fn collapse_from_matrix(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    if n < 2 {
        return 0.0;
    }
    let sum: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| matrix[i][j])
        .sum();
    sum / (n * (n - 1)) as f64
}

/// Mean adversarial transfer over ordered view pairs `(i, j)`, `i != j`.
pub fn collapse_score(views: &[ViewModel], probe: &Dataset, epsilon: f64) -> Result<f64> {
    if views.len() < 2 {
        return Err(Error::Config(format!(
            "collapse_score needs at least 2 views, got {}",
            views.len()
        )));
    }
    let m = transfer_matrix(views, &probe.features, epsilon, probe.feature_range)?;
    Ok(collapse_from_matrix(&m))
}

/// Fraction of rows on which every view predicts the same class.
pub fn agreement_rate(views: &[ViewModel], x: &Tensor) -> Result<f64> {
    let preds: Vec<Vec<usize>> = views
        .iter()
        .map(|v| v.forward(x).map(|p| p.argmax_rows()))
        .collect::<Result<_>>()?;
    let rows = x.rows();
    let agreed = (0..rows)
        .filter(|&r| preds.iter().all(|p| p[r] == preds[0][r]))
        .count();
    Ok(agreed as f64 / rows as f64)
}

/// One epoch of diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub per_view_err: Vec<f64>,
    pub mean_err: f64,
    pub l_sup: f64,
    pub l_cot: f64,
    pub l_dif: f64,
    pub agreement: f64,
    /// n×n cross-view transfer rates; diagonal is self-attack success.
    pub transfer: Vec<Vec<f64>>,
    pub lr: f64,
    pub lambda_cot: f64,
    pub lambda_dif: f64,
}

impl MetricsRecord {
    pub fn collapse(&self) -> f64 {
        collapse_from_matrix(&self.transfer)
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [
            self.mean_err,
            self.l_sup,
            self.l_cot,
            self.l_dif,
            self.agreement,
            self.lr,
            self.lambda_cot,
            self.lambda_dif,
        ];
        scalars.iter().all(|v| v.is_finite())
            && self.per_view_err.iter().all(|v| v.is_finite())
            && self.transfer.iter().flatten().all(|v| v.is_finite())
    }

    pub fn to_row(&self) -> MetricsRow {
        MetricsRow {
            epoch: self.epoch,
            mean_err: self.mean_err,
            per_view_err: self.per_view_err.clone(),
            l_sup: self.l_sup,
            l_cot: self.l_cot,
            l_dif: self.l_dif,
            agreement: self.agreement,
            collapse: self.collapse(),
            lr: self.lr,
            lambda_cot: self.lambda_cot,
            lambda_dif: self.lambda_dif,
        }
    }
}

/// One row of the metrics CSV; the persisted subset of [`MetricsRecord`]
/// with the transfer matrix reduced to its collapse score.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub mean_err: f64,
    pub per_view_err: Vec<f64>,
    pub l_sup: f64,
    pub l_cot: f64,
    pub l_dif: f64,
    pub agreement: f64,
    pub collapse: f64,
    pub lr: f64,
    pub lambda_cot: f64,
    pub lambda_dif: f64,
}

/// Append-only CSV sink for metrics rows.
///
/// Floats are written in shortest round-trip form, so reading the file
/// back reproduces the exact values.
pub struct MetricsWriter {
    out: BufWriter<File>,
    path: PathBuf,
    n_views: usize,
}

impl MetricsWriter {
    /// Creates (truncates) the file and writes the header.
    pub fn create(path: &Path, n_views: usize) -> Result<Self> {
        let file = OpenOptions::new()
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
            n_views,
        };
        let errs: Vec<String> = (0..n_views).map(|i| format!("err_v{i}")).collect();
        let header = format!(
            "epoch,mean_err,{},l_sup,l_cot,l_dif,agreement,collapse,lr,lambda_cot,lambda_dif\n",
            errs.join(",")
        );
        w.raw_write(&header)?;
        Ok(w)
    }

    fn raw_write(&mut self, s: &str) -> Result<()> {
        self.out
            .write_all(s.as_bytes())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        if row.per_view_err.len() != self.n_views {
            return Err(Error::Shape(format!(
                "row has {} views, file header has {}",
                row.per_view_err.len(),
                self.n_views
            )));
        }
        let errs: Vec<String> = row.per_view_err.iter().map(|v| format!("{v}")).collect();
        let line = format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.epoch,
            row.mean_err,
            errs.join(","),
            row.l_sup,
            row.l_cot,
            row.l_dif,
            row.agreement,
            row.collapse,
            row.lr,
            row.lambda_cot,
            row.lambda_dif
        );
        self.raw_write(&line)?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Convenience: write one record to an open sink.
pub fn write_metrics(record: &MetricsRecord, sink: &mut MetricsWriter) -> Result<()> {
    sink.write(&record.to_row())
}

/// Reads a metrics CSV back into rows.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty metrics file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    let expect_prefix = ["epoch", "mean_err"];
    let expect_suffix = [
        "l_sup",
        "l_cot",
        "l_dif",
        "agreement",
        "collapse",
        "lr",
        "lambda_cot",
        "lambda_dif",
    ];
    if cols.len() < expect_prefix.len() + expect_suffix.len() + 1 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header too short: {header:?}"),
        });
    }
    for (i, name) in expect_prefix.iter().enumerate() {
        if cols[i] != *name {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing column {name}"),
            });
        }
    }
    let n_views = cols.len() - expect_prefix.len() - expect_suffix.len();
    for (i, name) in expect_suffix.iter().enumerate() {
        let at = expect_prefix.len() + n_views + i;
        if cols[at] != *name {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing column {name}"),
            });
        }
    }
    for (i, col) in cols[2..2 + n_views].iter().enumerate() {
        if *col != format!("err_v{i}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("missing column err_v{i}"),
            });
        }
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, got {}", cols.len(), fields.len()),
            });
        }
        let f = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad float {s:?}: {e}"),
            })
        };
        let epoch = fields[0].parse::<usize>().map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("bad epoch {:?}: {e}", fields[0]),
        })?;
        let per_view_err = fields[2..2 + n_views]
            .iter()
            .map(|s| f(s))
            .collect::<Result<Vec<f64>>>()?;
        let tail = &fields[2 + n_views..];
        rows.push(MetricsRow {
            epoch,
            mean_err: f(fields[1])?,
            per_view_err,
            l_sup: f(tail[0])?,
            l_cot: f(tail[1])?,
            l_dif: f(tail[2])?,
            agreement: f(tail[3])?,
            collapse: f(tail[4])?,
            lr: f(tail[5])?,
            lambda_cot: f(tail[6])?,
            lambda_dif: f(tail[7])?,
        });
    }
    Ok(rows)
}
