//! Python bindings for the variability-collapse library.
//!
//! Feature matrices cross the boundary in numpy's row-per-sample layout
//! (`(n, p)` float64 plus `(n,)` int64 labels); the Rust side stores samples
//! as columns. Reports come back as plain dicts mirroring the JSON schema
//! of the CLI.
//!
//! Usage from Python:
//!
//!     import numpy as np, nc_metrics_py as ncm
//!     f = ncm.LabeledFeatures(np.random.randn(40, 8), np.arange(40) % 4)
//!     report = ncm.evaluate_all(f)
//!     print(report["vci"], report["fuzziness"])

use ndarray::{Array1, Array2};
use numpy::{IntoPyArray, PyArray1, PyArray2, PyReadonlyArray1, PyReadonlyArray2};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use std::path::PathBuf;

use nc_metrics::io::{self, FeatureFormat, LoadError};
use nc_metrics::metrics::{self, PolicyChoice};
use nc_metrics::probe;
use nc_metrics::spectra;
use nc_metrics::stats;
use nc_metrics::synth::{self, Geometry, GeneratorSpec};
use nc_metrics::transfer;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load_err(e: LoadError) -> PyErr {
    match e {
        LoadError::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_policy(policy: &str) -> PyResult<PolicyChoice> {
    policy.parse::<PolicyChoice>().map_err(value_err)
}

fn parse_format(path: &std::path::Path, format: Option<&str>) -> PyResult<FeatureFormat> {
    match format {
        None => Ok(FeatureFormat::infer(path)),
        Some("csv") => Ok(FeatureFormat::Csv),
        Some("npy") | Some("npy-pair") => Ok(FeatureFormat::NpyPair),
        Some(other) => Err(PyValueError::new_err(format!(
            "unknown format {other:?} (expected 'csv' or 'npy')"
        ))),
    }
}

/// Converts a JSON-serializable report into Python dicts/lists/floats.
fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<PyObject> {
    Ok(match value {
        serde_json::Value::Null => py.None(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().unbind().into(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.unbind().into()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.unbind().into()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.unbind().into(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.unbind().into()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.unbind().into()
        }
    })
}

fn to_py_dict<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<PyObject> {
    let json = serde_json::to_value(value).map_err(value_err)?;
    json_to_py(py, &json)
}

/// A labeled feature set: one row per sample, one class label per row.
#[pyclass(name = "LabeledFeatures")]
#[derive(Clone)]
struct PyLabeledFeatures {
    inner: nc_metrics::LabeledFeatures,
}

#[pymethods]
impl PyLabeledFeatures {
    /// Builds a feature set from an `(n, p)` float64 array and `(n,)` int64
    /// labels. The class count defaults to `max(labels) + 1`.
    #[new]
    #[pyo3(signature = (features, labels, class_count=None))]
    fn new(
        features: PyReadonlyArray2<'_, f64>,
        labels: PyReadonlyArray1<'_, i64>,
        class_count: Option<usize>,
    ) -> PyResult<Self> {
        let rows = features.as_array();
        let (n, p) = rows.dim();
        let mut columns = Array2::<f64>::zeros((p, n));
        for j in 0..n {
            for i in 0..p {
                columns[[i, j]] = rows[[j, i]];
            }
        }
        let labels_vec: Vec<usize> = labels
            .as_array()
            .iter()
            .map(|&l| {
                usize::try_from(l)
                    .map_err(|_| PyValueError::new_err(format!("negative label {l}")))
            })
            .collect::<PyResult<_>>()?;
        let k = class_count
            .unwrap_or_else(|| labels_vec.iter().max().map_or(0, |&m| m + 1));
        let inner = nc_metrics::LabeledFeatures::new(columns, labels_vec, k).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Loads a CSV file or NPY pair (format inferred from the extension).
    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let fmt = parse_format(&path, format)?;
        let inner = io::load_features(&path, fmt).map_err(load_err)?;
        Ok(Self { inner })
    }

    /// Saves to a CSV file or NPY pair (format inferred from the extension).
    #[pyo3(signature = (path, format=None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let fmt = parse_format(&path, format)?;
        io::save_features(&self.inner, &path, fmt).map_err(load_err)
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn sample_count(&self) -> usize {
        self.inner.sample_count()
    }

    #[getter]
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    #[getter]
    fn is_balanced(&self) -> bool {
        self.inner.is_balanced()
    }

    /// The features as an `(n, p)` array (row per sample).
    fn features<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        self.inner.features().t().to_owned().into_pyarray(py)
    }

    fn labels<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray1<i64>> {
        Array1::from_iter(self.inner.labels().iter().map(|&l| l as i64)).into_pyarray(py)
    }

    fn __repr__(&self) -> String {
        format!(
            "LabeledFeatures(p={}, n={}, classes={})",
            self.inner.feature_dim(),
            self.inner.sample_count(),
            self.inner.class_count()
        )
    }
}

/// Full collapse-metric report as a dict (same schema as the CLI JSON).
#[pyfunction]
#[pyo3(signature = (features, policy="rel:auto"))]
fn evaluate_all(py: Python<'_>, features: &PyLabeledFeatures, policy: &str) -> PyResult<PyObject> {
    let choice = parse_policy(policy)?;
    let report = metrics::evaluate_all(&features.inner, &choice);
    to_py_dict(py, &report)
}

/// Eigenvalue spectra, retained counts, and fuzziness policy sensitivity.
#[pyfunction]
#[pyo3(signature = (features, policy="rel:auto"))]
fn spectrum_report(
    py: Python<'_>,
    features: &PyLabeledFeatures,
    policy: &str,
) -> PyResult<PyObject> {
    let choice = parse_policy(policy)?;
    let covs = stats::covariances(&features.inner);
    let report = spectra::spectrum_report(&covs, &choice);
    let out = to_py_dict(py, &report)?;
    let dict = out.downcast_bound::<PyDict>(py)?;
    let sensitivity = PyDict::new(py);
    for (policy, value) in metrics::fuzziness_sensitivity(&covs) {
        sensitivity.set_item(policy.to_string(), value)?;
    }
    dict.set_item("fuzziness_sensitivity", sensitivity)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (features, policy="rel:auto"))]
fn fuzziness(features: &PyLabeledFeatures, policy: &str) -> PyResult<f64> {
    let choice = parse_policy(policy)?;
    let covs = stats::covariances(&features.inner);
    let p = covs.feature_dim();
    let k = covs.class_count();
    Ok(metrics::fuzziness(&covs, &choice.for_sigma_b(p, k)))
}

#[pyfunction]
fn squared_distance(features: &PyLabeledFeatures) -> PyResult<f64> {
    metrics::squared_distance(&features.inner).map_err(value_err)
}

/// `(cos_within, cos_total, class_separation-or-None)`.
#[pyfunction]
fn cosine_stats(features: &PyLabeledFeatures) -> PyResult<(f64, f64, Option<f64>)> {
    let stats = metrics::cosine_stats(&features.inner).map_err(value_err)?;
    Ok((stats.cos_within, stats.cos_total, stats.class_separation))
}

/// `(trace_ratio, vci, rank_bound)` under the `Σ_T` policy.
#[pyfunction]
#[pyo3(signature = (features, policy="rel:auto"))]
fn vci(features: &PyLabeledFeatures, policy: &str) -> PyResult<(f64, f64, usize)> {
    let choice = parse_policy(policy)?;
    let covs = stats::covariances(&features.inner);
    let values =
        metrics::vci(&covs, &choice.for_sigma_t(covs.feature_dim())).map_err(value_err)?;
    Ok((values.trace_ratio, values.vci, values.rank_bound))
}

/// Closed-form MSE probe: dict with `weights` `(K, p)`, `bias` `(K,)`, `loss`.
#[pyfunction]
fn solve_mse_probe(py: Python<'_>, features: &PyLabeledFeatures) -> PyResult<PyObject> {
    let solution = probe::solve_mse_probe(&features.inner).map_err(value_err)?;
    let dict = PyDict::new(py);
    dict.set_item("weights", solution.weights.into_pyarray(py))?;
    dict.set_item("bias", solution.bias.into_pyarray(py))?;
    dict.set_item("loss", solution.loss)?;
    Ok(dict.unbind().into())
}

#[pyfunction]
fn mse_loss(
    weights: PyReadonlyArray2<'_, f64>,
    bias: PyReadonlyArray1<'_, f64>,
    features: &PyLabeledFeatures,
) -> PyResult<f64> {
    let w = weights.as_array().to_owned();
    let b = bias.as_array().to_owned();
    probe::mse_loss(&w, &b, &features.inner).map_err(value_err)
}

#[pyfunction]
fn oracle_min_loss(features: &PyLabeledFeatures) -> f64 {
    probe::oracle_min_loss(&features.inner)
}

#[pyfunction]
#[pyo3(signature = (features, policy="rel:auto"))]
fn predicted_min_loss(features: &PyLabeledFeatures, policy: &str) -> PyResult<f64> {
    let choice = parse_policy(policy)?;
    let covs = stats::covariances(&features.inner);
    Ok(probe::predicted_min_loss(
        &covs,
        &choice.for_sigma_t(covs.feature_dim()),
    ))
}

/// Fully collapsed centered-simplex configuration.
#[pyfunction]
#[pyo3(signature = (k, p, n, seed=0))]
fn collapsed_config(k: usize, p: usize, n: usize, seed: u64) -> PyResult<PyLabeledFeatures> {
    let spec = GeneratorSpec {
        class_count: k,
        feature_dim: p,
        samples_per_class: n,
        geometry: Geometry::SimplexCollapsed,
        seed,
    };
    Ok(PyLabeledFeatures {
        inner: synth::collapsed_config(&spec).map_err(value_err)?,
    })
}

/// Collapsed configuration plus noise confined to the between space
/// (`geometry="vb-noise"`) or its complement (`geometry="vb-perp-noise"`).
#[pyfunction]
#[pyo3(signature = (k, p, n, sigma, seed=0, geometry="vb-perp-noise"))]
fn noisy_config(
    k: usize,
    p: usize,
    n: usize,
    sigma: f64,
    seed: u64,
    geometry: &str,
) -> PyResult<PyLabeledFeatures> {
    let geometry = match geometry {
        "vb-perp-noise" => Geometry::VbPerpNoise(sigma),
        "vb-noise" => Geometry::VbNoise(sigma),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown geometry {other:?} (expected 'vb-perp-noise' or 'vb-noise')"
            )))
        }
    };
    let spec = GeneratorSpec {
        class_count: k,
        feature_dim: p,
        samples_per_class: n,
        geometry,
        seed,
    };
    Ok(PyLabeledFeatures {
        inner: synth::noisy_config(&spec).map_err(value_err)?,
    })
}

/// Shifts the first sample of each class along a null vector of `weights`.
#[pyfunction(name = "nullspace_inflate")]
#[pyo3(signature = (features, weights, lam))]
fn nullspace_inflate_py(
    features: &PyLabeledFeatures,
    weights: PyReadonlyArray2<'_, f64>,
    lam: f64,
) -> PyResult<PyLabeledFeatures> {
    let w = weights.as_array().to_owned();
    Ok(PyLabeledFeatures {
        inner: synth::nullspace_inflate(&features.inner, &w, lam).map_err(value_err)?,
    })
}

/// Seeded invertible matrix with the given condition number.
#[pyfunction]
#[pyo3(signature = (p, seed=0, cond_max=1.0))]
fn random_invertible(py: Python<'_>, p: usize, seed: u64, cond_max: f64) -> Bound<'_, PyArray2<f64>> {
    synth::random_invertible(p, seed, cond_max).into_pyarray(py)
}

#[pyfunction]
fn apply_transform(
    features: &PyLabeledFeatures,
    a: PyReadonlyArray2<'_, f64>,
) -> PyResult<PyLabeledFeatures> {
    let matrix = a.as_array().to_owned();
    Ok(PyLabeledFeatures {
        inner: synth::apply_transform(&features.inner, &matrix).map_err(value_err)?,
    })
}

/// `(sigma_b, sigma_w, u)` of the fuzziness non-invariance counterexample.
#[pyfunction]
fn fuzziness_counterexample(
    py: Python<'_>,
) -> (
    Bound<'_, PyArray2<f64>>,
    Bound<'_, PyArray2<f64>>,
    Bound<'_, PyArray2<f64>>,
) {
    let (b, w, u) = synth::fuzziness_counterexample();
    (b.into_pyarray(py), w.into_pyarray(py), u.into_pyarray(py))
}

/// The bundled pretraining/downstream rows as a list of dicts.
#[pyfunction]
fn fixture_records(py: Python<'_>) -> PyResult<PyObject> {
    let list = PyList::empty(py);
    for record in transfer::fixture_records() {
        let dict = PyDict::new(py);
        dict.set_item("setting", &record.setting)?;
        dict.set_item("downstream_accs", record.downstream_accs.clone())?;
        dict.set_item("pretrain_acc", record.pretrain_acc)?;
        let metric_values = PyDict::new(py);
        for (name, value) in &record.metric_values {
            metric_values.set_item(name, *value)?;
        }
        dict.set_item("metric_values", metric_values)?;
        dict.set_item("mlog", record.mlog)?;
        dict.set_item("mean_log_odds", record.mean_log_odds)?;
        list.append(dict)?;
    }
    Ok(list.unbind().into())
}

/// Metric-vs-MLOG Pearson correlations over the bundled tables.
#[pyfunction]
fn correlation_report(py: Python<'_>) -> PyResult<PyObject> {
    let records = transfer::fixture_records();
    let report = transfer::correlation_report(&records, &transfer::fixture_groups())
        .map_err(value_err)?;
    to_py_dict(py, &report)
}

#[pyfunction]
fn mean_log_odds_gain(downstream_accs: Vec<f64>, pretrain_acc: f64) -> PyResult<f64> {
    transfer::mean_log_odds_gain(&downstream_accs, pretrain_acc).map_err(value_err)
}

#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    transfer::pearson(&x, &y).map_err(value_err)
}

#[pymodule]
fn nc_metrics_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLabeledFeatures>()?;
    m.add_function(wrap_pyfunction!(evaluate_all, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_report, m)?)?;
    m.add_function(wrap_pyfunction!(fuzziness, m)?)?;
    m.add_function(wrap_pyfunction!(squared_distance, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_stats, m)?)?;
    m.add_function(wrap_pyfunction!(vci, m)?)?;
    m.add_function(wrap_pyfunction!(solve_mse_probe, m)?)?;
    m.add_function(wrap_pyfunction!(mse_loss, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_min_loss, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_min_loss, m)?)?;
    m.add_function(wrap_pyfunction!(collapsed_config, m)?)?;
    m.add_function(wrap_pyfunction!(noisy_config, m)?)?;
    m.add_function(wrap_pyfunction!(nullspace_inflate_py, m)?)?;
    m.add_function(wrap_pyfunction!(random_invertible, m)?)?;
    m.add_function(wrap_pyfunction!(apply_transform, m)?)?;
    m.add_function(wrap_pyfunction!(fuzziness_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_records, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_report, m)?)?;
    m.add_function(wrap_pyfunction!(mean_log_odds_gain, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    Ok(())
}
