//! Loading labeled feature matrices from disk and serializing analysis
//! reports.
//!
//! Two on-disk feature formats, both row-per-sample (the in-memory matrix is
//! sample-per-column; loaders transpose):
//!
//! * CSV: UTF-8, one sample per row, a non-negative integer label then the
//!   p feature values. An optional header row is detected by a non-numeric
//!   first token.
//! * NPY pair: a v1.0 `<f8`/`<f4` C-order `(n, p)` features file plus a
//!   `<i8` `(n,)` labels file. `<f4` input is widened to f64. For a
//!   features path `X.npy` the labels default to `X.labels.npy`.
//!
//! Reports serialize as JSON with a fixed field order; 64-bit floats
//! round-trip bit-exactly through the decimal encoding, and undefined
//! values encode as `null`.

mod csv;
mod npy;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, LabeledFeatures};
use crate::metrics::MetricReport;
use crate::probe::ProbeSolution;
use crate::spectra::SpectrumReport;

pub use csv::{load_csv, save_csv};
pub use npy::{load_npy_pair, save_npy_pair};

/// On-disk feature layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    NpyPair,
}

impl FeatureFormat {
    /// Picks the format from the file extension: `.npy` means the NPY pair,
    /// anything else CSV.
    pub fn infer(path: &Path) -> FeatureFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("npy") => FeatureFormat::NpyPair,
            _ => FeatureFormat::Csv,
        }
    }
}

impl fmt::Display for FeatureFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureFormat::Csv => write!(f, "csv"),
            FeatureFormat::NpyPair => write!(f, "npy-pair"),
        }
    }
}

/// Companion labels path for an NPY features file: `X.npy` → `X.labels.npy`.
pub fn default_labels_path(features: &Path) -> PathBuf {
    features.with_extension("labels.npy")
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record at column {column}: {detail}")]
    Malformed {
        path: PathBuf,
        line: usize,
        column: usize,
        detail: String,
    },
    #[error("{path}:{line}: non-finite value at column {column}")]
    NonFinite {
        path: PathBuf,
        line: usize,
        column: usize,
    },
    #[error("{path}:{line}: label {label} out of range at column {column}")]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        column: usize,
        label: i64,
    },
    #[error("{path}: class {class} has no samples")]
    EmptyClass { path: PathBuf, class: usize },
    #[error("{path}: bad npy header: {detail}")]
    BadNpyHeader { path: PathBuf, detail: String },
    #[error("features file has {features} samples but labels file has {labels}")]
    SampleCountMismatch { features: usize, labels: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> LoadError {
    LoadError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Loads a labeled feature matrix. For [`FeatureFormat::NpyPair`] the labels
/// file is derived with [`default_labels_path`].
pub fn load_features(path: &Path, format: FeatureFormat) -> Result<LabeledFeatures, LoadError> {
    match format {
        FeatureFormat::Csv => load_csv(path),
        FeatureFormat::NpyPair => load_npy_pair(path, &default_labels_path(path)),
    }
}

/// Saves features in the given format (NPY writes the derived labels file
/// alongside).
pub fn save_features(
    f: &LabeledFeatures,
    path: &Path,
    format: FeatureFormat,
) -> Result<(), LoadError> {
    match format {
        FeatureFormat::Csv => save_csv(f, path),
        FeatureFormat::NpyPair => save_npy_pair(f, path, &default_labels_path(path)),
    }
}

/// Any serializable analysis report.
#[derive(Debug, Clone, PartialEq)]
pub enum Report {
    Metrics(MetricReport),
    Probe(ProbeSolution),
    Spectrum(SpectrumReport),
}

/// Writes a report as pretty-printed JSON. The output is deterministic, so
/// saving, loading, and saving again is byte-identical.
pub fn save_report(report: &Report, path: &Path) -> Result<(), LoadError> {
    match report {
        Report::Metrics(r) => save_json(r, path),
        Report::Probe(r) => save_json(r, path),
        Report::Spectrum(r) => save_json(r, path),
    }
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<(), LoadError> {
    let file = File::create(path).map_err(|e| io_error(path, e))?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, value)
        .map_err(|e| io_error(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    writer
        .write_all(b"\n")
        .and_then(|_| writer.flush())
        .map_err(|e| io_error(path, e))
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, LoadError> {
    let data = std::fs::read(path).map_err(|e| io_error(path, e))?;
    serde_json::from_slice(&data)
        .map_err(|e| io_error(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}

pub fn load_metric_report(path: &Path) -> Result<MetricReport, LoadError> {
    load_json(path)
}

pub fn load_probe_solution(path: &Path) -> Result<ProbeSolution, LoadError> {
    load_json(path)
}

pub fn load_spectrum_report(path: &Path) -> Result<SpectrumReport, LoadError> {
    load_json(path)
}

/// Validates labels parsed from disk (with their source lines) and derives
/// the class count as the largest label plus one.
pub(crate) fn validate_labels(
    path: &Path,
    labels_raw: &[(i64, usize)],
    label_column: usize,
) -> Result<(Vec<usize>, usize), LoadError> {
    let mut labels = Vec::with_capacity(labels_raw.len());
    for &(label, line) in labels_raw {
        if label < 0 {
            return Err(LoadError::LabelOutOfRange {
                path: path.to_path_buf(),
                line,
                column: label_column,
                label,
            });
        }
        labels.push(label as usize);
    }
    let class_count = labels.iter().max().map_or(0, |&m| m + 1);
    let mut counts = vec![0usize; class_count];
    for &label in &labels {
        counts[label] += 1;
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(LoadError::EmptyClass {
            path: path.to_path_buf(),
            class,
        });
    }
    Ok((labels, class_count))
}

/// Assembles row-per-sample records into the sample-per-column matrix.
pub(crate) fn assemble(
    path: &Path,
    rows: Vec<Vec<f64>>,
    labels_raw: Vec<(i64, usize)>,
    label_column: usize,
) -> Result<LabeledFeatures, LoadError> {
    let (labels, class_count) = validate_labels(path, &labels_raw, label_column)?;
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mut features = ndarray::Array2::<f64>::zeros((p, n));
    for (j, row) in rows.iter().enumerate() {
        for (i, &v) in row.iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    Ok(LabeledFeatures::new(features, labels, class_count)?)
}

/// Assembles an already-transposed `(p, n)` matrix with raw labels.
pub(crate) fn assemble_from_matrix(
    path: &Path,
    features: ndarray::Array2<f64>,
    labels_raw: Vec<(i64, usize)>,
) -> Result<LabeledFeatures, LoadError> {
    let (labels, class_count) = validate_labels(path, &labels_raw, 1)?;
    Ok(LabeledFeatures::new(features, labels, class_count)?)
}
