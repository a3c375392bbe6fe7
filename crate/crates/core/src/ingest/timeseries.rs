//! ROI time-series CSV tables.
//!
//! The default layout has one row per time point and one column per ROI, no
//! header. `transposed` flips that to one row per ROI.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::N_ROIS;
use crate::error::{Error, Result};
use crate::graph::FeatureMatrix;

/// How subjects with different scan lengths are brought to a common `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", content = "length", rename_all = "snake_case")]
pub enum TimeLengthPolicy {
    /// Keep every time point.
    AsIs,
    /// Keep the first `T` points; shorter series are an error.
    Truncate(usize),
    /// Truncate longer series, zero-pad shorter ones symmetrically.
    Fit(usize),
    /// Truncate every subject to the shortest series in the cohort.
    /// Resolved to [`TimeLengthPolicy::Truncate`] when a cohort is loaded.
    #[default]
    TruncateToMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub n_rois: usize,
    /// First line is a header.
    pub header: bool,
    /// Rows are ROIs instead of time points.
    pub transposed: bool,
    /// Z-score every ROI row after the length policy (before padding).
    pub zscore: bool,
    pub policy: TimeLengthPolicy,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            n_rois: N_ROIS,
            header: false,
            transposed: false,
            zscore: true,
            policy: TimeLengthPolicy::TruncateToMin,
        }
    }
}

/// Reads a table into an `n_rois × T` matrix without applying any policy.
pub fn read_timeseries_rows(path: &Path, opts: &LoadOptions) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let line_offset = if opts.header { 2 } else { 1 };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = r + line_offset;
        if !opts.transposed && rec.len() != opts.n_rois {
            return Err(Error::Parse {
                path: path.into(),
                row: line,
                col: rec.len(),
                msg: format!("expected {} ROI columns, found {}", opts.n_rois, rec.len()),
            });
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                row: line,
                col: c + 1,
                msg: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    row: line,
                    col: c + 1,
                    msg: format!("`{cell}` is not finite"),
                });
            }
            vals.push(v);
        }
        rows.push(vals);
    }

    let matrix = if opts.transposed {
        if rows.len() != opts.n_rois {
            return Err(Error::Parse {
                path: path.into(),
                row: rows.len(),
                col: 0,
                msg: format!("expected {} ROI rows, found {}", opts.n_rois, rows.len()),
            });
        }
        let t = rows.first().map_or(0, Vec::len);
        if let Some((r, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != t) {
            return Err(Error::Parse {
                path: path.into(),
                row: r + line_offset,
                col: row.len(),
                msg: format!("expected {t} time points, found {}", row.len()),
            });
        }
        Array2::from_shape_fn((opts.n_rois, t), |(i, j)| rows[i][j])
    } else {
        let t = rows.len();
        Array2::from_shape_fn((opts.n_rois, t), |(i, j)| rows[j][i])
    };
    if matrix.ncols() < 2 {
        return Err(Error::Parse {
            path: path.into(),
            row: matrix.ncols(),
            col: 0,
            msg: format!("need at least 2 time points, found {}", matrix.ncols()),
        });
    }
    Ok(matrix)
}

/// Z-scores each row in place; rows with (near) zero variance become zeros.
pub fn zscore_rows(m: &mut Array2<f64>) {
    let t = m.ncols() as f64;
    for mut row in m.axis_iter_mut(Axis(0)) {
        let mean = row.sum() / t;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t;
        let sd = var.sqrt();
        if sd <= 1e-12 * (1.0 + mean.abs()) {
            row.fill(0.0);
        } else {
            row.mapv_inplace(|v| (v - mean) / sd);
        }
    }
}

/// Loads one subject: read, apply the length policy, z-score, pad.
pub fn load_timeseries(path: &Path, opts: &LoadOptions) -> Result<FeatureMatrix> {
    let raw = read_timeseries_rows(path, opts)?;
    prepare_timeseries(raw, opts, path)
}

/// Applies the length policy, z-scoring and padding to a raw
/// `n_rois × T` matrix read from `path`.
pub fn prepare_timeseries(
    raw: Array2<f64>,
    opts: &LoadOptions,
    path: &Path,
) -> Result<FeatureMatrix> {
    let t = raw.ncols();
    let (keep, target) = match opts.policy {
        TimeLengthPolicy::AsIs | TimeLengthPolicy::TruncateToMin => (t, t),
        TimeLengthPolicy::Truncate(len) => {
            if t < len {
                return Err(Error::Parse {
                    path: path.into(),
                    row: t,
                    col: 0,
                    msg: format!("series has {t} time points, policy needs {len}"),
                });
            }
            (len, len)
        }
        TimeLengthPolicy::Fit(len) => (t.min(len), len),
    };
    if target < 2 {
        return Err(Error::Invalid(format!(
            "time-length policy target {target} is below 2"
        )));
    }
    let mut kept = raw.slice(s![.., ..keep]).to_owned();
    if opts.zscore {
        zscore_rows(&mut kept);
    }
    if keep == target {
        return FeatureMatrix::new(kept);
    }
    let left = (target - keep) / 2;
    let mut out = Array2::zeros((kept.nrows(), target));
    out.slice_mut(s![.., left..left + keep]).assign(&kept);
    FeatureMatrix::new(out)
}

/// Writes an `n_rois × T` matrix in the default layout (time points as rows).
/// Values use the shortest representation that parses back bit-exactly.
pub fn write_timeseries(path: &Path, ts: &FeatureMatrix) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let m = ts.view();
    for t in 0..m.ncols() {
        let mut line = String::with_capacity(m.nrows() * 20);
        for i in 0..m.nrows() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&m[[i, t]].to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
