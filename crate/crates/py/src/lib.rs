//! Python bindings: the main table/anonymization/metric operations behind a
//! thin JSON-oriented surface.
//!
//! Complex inputs (schemas, g-trees, thresholds) and outputs (reports) move
//! as JSON strings so the Python side stays dependency-free; numeric
//! primitives take and return plain lists and floats.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use anondq::anonymizer::{self, AnonymizeConfig};
use anondq::gtree::{GTree, GTreeSpec};
use anondq::info_theory::{self, MetricOutcome, NmiConfig, NmiVariant};
use anondq::justification;
use anondq::minimization::{self, SensitivityConfig};
use anondq::quality::{self, ThresholdConfig};
use anondq::tabular::{self, ColumnSchema, LoadOptions};

fn err_of(e: anondq::Error) -> PyErr {
    match e {
        anondq::Error::Config(_) | anondq::Error::Schema(_) | anondq::Error::Precondition(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_gtrees(gtrees_json: Option<&str>) -> PyResult<HashMap<String, GTree>> {
    let mut out = HashMap::new();
    if let Some(text) = gtrees_json {
        let specs: HashMap<String, GTreeSpec> = serde_json::from_str(text).map_err(json_err)?;
        for (column, spec) in specs {
            out.insert(column, GTree::from_spec(&spec).map_err(err_of)?);
        }
    }
    Ok(out)
}

/// An immutable columnar table with explicit row identity.
#[pyclass(name = "Table", skip_from_py_object)]
#[derive(Clone)]
struct PyTable {
    inner: tabular::Table,
}

#[pymethods]
impl PyTable {
    /// Load a delimited text file. `schema_json` is a list of
    /// `{"name", "kind": "numerical"|"categorical", "role"}` records.
    #[staticmethod]
    #[pyo3(signature = (path, schema_json, row_id_column = "row_id", delimiter = ","))]
    fn load(path: PathBuf, schema_json: &str, row_id_column: &str, delimiter: &str) -> PyResult<Self> {
        let schema: Vec<ColumnSchema> = serde_json::from_str(schema_json).map_err(json_err)?;
        let options = LoadOptions {
            delimiter: delimiter.as_bytes().first().copied().unwrap_or(b','),
            row_id_column: row_id_column.to_string(),
        };
        let inner = tabular::load_table(&path, &schema, &options).map_err(err_of)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn row_ids(&self) -> Vec<u64> {
        self.inner.row_ids().to_vec()
    }

    #[getter]
    fn columns(&self) -> Vec<String> {
        self.inner.schema().iter().map(|c| c.name.clone()).collect()
    }

    #[getter]
    fn quasi_identifiers(&self) -> Vec<String> {
        self.inner.quasi_identifiers()
    }

    /// Numerical column values in row order; missing cells become None.
    fn numerical_column(&self, name: &str) -> PyResult<Vec<Option<f64>>> {
        Ok(self.inner.numerical_column(name).map_err(err_of)?.to_vec())
    }

    /// Categorical column tokens in row order; missing cells become None.
    fn categorical_column(&self, name: &str) -> PyResult<Vec<Option<String>>> {
        Ok(self.inner.categorical_column(name).map_err(err_of)?.to_vec())
    }

    fn write(&self, path: PathBuf, row_id_column: &str) -> PyResult<()> {
        let options = LoadOptions { row_id_column: row_id_column.to_string(), ..LoadOptions::default() };
        tabular::write_table(&self.inner, &path, &options).map_err(err_of)
    }

    fn __repr__(&self) -> String {
        format!("Table({} rows x {} columns)", self.inner.n_rows(), self.inner.schema().len())
    }
}

/// Outcome of anonymizing a table: the anonymized rows plus bookkeeping.
#[pyclass(name = "AnonymizationOutcome")]
struct PyAnonymizationOutcome {
    #[pyo3(get)]
    anonymized: PyTable,
    #[pyo3(get)]
    suppressed_row_ids: Vec<u64>,
    #[pyo3(get)]
    n_classes: usize,
    #[pyo3(get)]
    k: usize,
    result_json: String,
}

#[pymethods]
impl PyAnonymizationOutcome {
    /// Full AnonymizationResult (classes with generalized values) as JSON.
    fn result_json(&self) -> &str {
        &self.result_json
    }
}

/// Anonymize with the reference micro-aggregation algorithm.
#[pyfunction]
#[pyo3(signature = (table, k, gtrees_json = None, max_suppression_frac = 1.0))]
fn anonymize(
    table: &PyTable,
    k: usize,
    gtrees_json: Option<&str>,
    max_suppression_frac: f64,
) -> PyResult<PyAnonymizationOutcome> {
    let quasi_ids = table.inner.quasi_identifiers();
    let mut gtrees = parse_gtrees(gtrees_json)?;
    anonymizer::ensure_gtrees(&table.inner, &quasi_ids, &mut gtrees).map_err(err_of)?;
    let config = AnonymizeConfig { max_suppression_frac, ..AnonymizeConfig::new(k) };
    let result = anonymizer::anonymize(&table.inner, &quasi_ids, &gtrees, &config).map_err(err_of)?;
    let pair = anonymizer::to_pair(&table.inner, &result).map_err(err_of)?;
    Ok(PyAnonymizationOutcome {
        anonymized: PyTable { inner: pair.anonymized },
        suppressed_row_ids: result.suppressed_row_ids.iter().copied().collect(),
        n_classes: result.classes.len(),
        k: result.k,
        result_json: serde_json::to_string(&result).map_err(json_err)?,
    })
}

/// Evaluate all data quality metrics for an (original, anonymized) pair and
/// gate them against thresholds. Returns the MetricReport as JSON.
#[pyfunction]
#[pyo3(signature = (original, anonymized, gtrees_json = None, thresholds_json = None, seed = 0))]
fn evaluate_metrics(
    original: &PyTable,
    anonymized: &PyTable,
    gtrees_json: Option<&str>,
    thresholds_json: Option<&str>,
    seed: u64,
) -> PyResult<String> {
    let quasi_ids = original.inner.quasi_identifiers();
    let mut gtrees = parse_gtrees(gtrees_json)?;
    anonymizer::ensure_gtrees(&original.inner, &quasi_ids, &mut gtrees).map_err(err_of)?;
    let thresholds: ThresholdConfig = match thresholds_json {
        Some(text) => serde_json::from_str(text).map_err(json_err)?,
        None => ThresholdConfig::default(),
    };
    let result =
        anonymizer::reconstruct_result(&original.inner, &anonymized.inner, &quasi_ids).map_err(err_of)?;
    let pair =
        tabular::align_pair(&original.inner, &anonymized.inner, &result.suppressed_row_ids).map_err(err_of)?;
    let nmi = NmiConfig { seed, ..NmiConfig::default() };
    let report = quality::evaluate(&pair, &result, &gtrees, &thresholds, &nmi).map_err(err_of)?;
    serde_json::to_string(&report).map_err(json_err)
}

/// Multiplicity-aware entropy estimate in nats.
#[pyfunction]
fn entropy(values: Vec<f64>) -> f64 {
    info_theory::entropy_nats(&values)
}

/// Kraskov k-NN mutual information estimate in nats.
#[pyfunction]
#[pyo3(signature = (x, y, k = 3, seed = 0))]
fn mutual_information(x: Vec<f64>, y: Vec<f64>, k: usize, seed: u64) -> PyResult<f64> {
    info_theory::estimate_mi_seeded(&x, &y, k, seed).map_err(err_of)
}

/// Exponential entropy scaling of an unscaled NMI ratio.
#[pyfunction]
fn scale_nmiv1(n: f64, e: f64) -> f64 {
    info_theory::scale_nmiv1(n, e)
}

/// Sampled-and-scaled NMI for aligned value vectors. Returns
/// `(value, raw_ratio, variance, sampled)`.
#[pyfunction]
#[pyo3(signature = (x, y, variant = "v1", sample_size = 10000, n_repeats = 5, knn_k = 3, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn nmi_sampled(
    x: Vec<f64>,
    y: Vec<f64>,
    variant: &str,
    sample_size: usize,
    n_repeats: usize,
    knn_k: usize,
    seed: u64,
) -> PyResult<Option<(f64, f64, f64, bool)>> {
    let variant = match variant {
        "v1" => NmiVariant::V1,
        "v2" => NmiVariant::V2,
        other => return Err(PyValueError::new_err(format!("variant must be 'v1' or 'v2', got '{other}'"))),
    };
    let config = NmiConfig { sample_size, n_repeats, knn_k, seed };
    match info_theory::nmi_scored_vecs(&x, &y, &config, variant, 0).map_err(err_of)? {
        MetricOutcome::Applicable(s) => Ok(Some((s.value, s.raw, s.variance, s.estimate.sampled))),
        MetricOutcome::NotApplicable(_) => Ok(None),
    }
}

/// The validation random model `t = X + b*X*Y + c*Z`; returns `(x, t)`.
#[pyfunction]
#[pyo3(signature = (n, b = 0.40, c = 0.05, rounding = None, seed = 0))]
fn gen_random_model(n: usize, b: f64, c: f64, rounding: Option<i32>, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    justification::gen_random_model(n, b, c, rounding, seed).map_err(err_of)
}

/// Sensitivity analysis over sub-sample sizes in `[n_min, 2*n_min]`;
/// returns the SensitivityReport as JSON.
#[pyfunction]
#[pyo3(signature = (table, n_min, k, gtrees_json = None, thresholds_json = None, m_subsamples = 5, step_frac = 0.05, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn sensitivity_analysis(
    table: &PyTable,
    n_min: usize,
    k: usize,
    gtrees_json: Option<&str>,
    thresholds_json: Option<&str>,
    m_subsamples: usize,
    step_frac: f64,
    seed: u64,
) -> PyResult<String> {
    let gtrees = parse_gtrees(gtrees_json)?;
    let mut config = SensitivityConfig::new(n_min, k, seed);
    config.m_subsamples = m_subsamples;
    config.step_frac = step_frac;
    if let Some(text) = thresholds_json {
        config.thresholds = serde_json::from_str(text).map_err(json_err)?;
    }
    let quasi_ids = table.inner.quasi_identifiers();
    let report =
        minimization::sensitivity_analysis(&table.inner, &quasi_ids, &gtrees, &config).map_err(err_of)?;
    serde_json::to_string(&report).map_err(json_err)
}

/// Verify k-anonymity directly on an anonymized table.
#[pyfunction]
fn verify_k_anonymity(anonymized: &PyTable, k: usize) -> PyResult<bool> {
    let quasi_ids = anonymized.inner.quasi_identifiers();
    anonymizer::verify_k_anonymity(&anonymized.inner, &quasi_ids, k).map_err(err_of)
}

/// Alignment check used before hand-built pairs: anonymized ids must equal
/// original ids minus the suppressed set.
#[pyfunction]
fn check_alignment(original: &PyTable, anonymized: &PyTable, suppressed: Vec<u64>) -> PyResult<bool> {
    let suppressed: BTreeSet<u64> = suppressed.into_iter().collect();
    Ok(tabular::align_pair(&original.inner, &anonymized.inner, &suppressed).is_ok())
}

#[pymodule]
fn anondq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyTable>()?;
    m.add_class::<PyAnonymizationOutcome>()?;
    m.add_function(wrap_pyfunction!(anonymize, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(scale_nmiv1, m)?)?;
    m.add_function(wrap_pyfunction!(nmi_sampled, m)?)?;
    m.add_function(wrap_pyfunction!(gen_random_model, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivity_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(verify_k_anonymity, m)?)?;
    m.add_function(wrap_pyfunction!(check_alignment, m)?)?;
    Ok(())
}
