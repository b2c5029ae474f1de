//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pegasus::data::{build_contaminated_sample, generate_pegasus, load_mnist, ContaminatedSample, MnistSplit, PegasusConfig};
use pegasus::detectors::{combine_flags, re_scores, top_k_flags, AnomalyScores, DetectorKind, DetectorSpec, FlagSet, LofParams};
use pegasus::experiment::config::ExperimentConfig;
use pegasus::experiment::{run_experiment, run_pegasus_demo};
use pegasus::framework::curse_of_dim_demo;
use pegasus::manifold::{AeConfig, ManifoldModel, ManifoldSpec, PcaTarget};
use pegasus::metrics::{confusion, f1, precision, recall};

fn err(e: pegasus::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> PyResult<Array2<f64>> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Array2::from_shape_vec((rows.len(), d), rows.concat()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// A labelled dataset with known anomalies.
#[pyclass(frozen)]
struct Sample {
    inner: ContaminatedSample,
}

#[pymethods]
impl Sample {
    /// The synthetic horse dataset.
    #[staticmethod]
    #[pyo3(signature = (seed=0, n_normal=None))]
    fn pegasus(seed: u64, n_normal: Option<usize>) -> PyResult<Self> {
        let mut config = PegasusConfig::default();
        if let Some(n) = n_normal {
            config.n_normal = n;
        }
        generate_pegasus(&config, seed).map(|inner| Self { inner }).map_err(err)
    }

    /// One bulk digit class plus sampled anomaly classes from MNIST IDX files.
    #[staticmethod]
    #[pyo3(signature = (data_dir, split="train", bulk_class=1, anomalies=vec![(7, 120), (8, 120)], seed=0))]
    fn mnist(data_dir: PathBuf, split: &str, bulk_class: u8, anomalies: Vec<(u8, usize)>, seed: u64) -> PyResult<Self> {
        let split: MnistSplit = split.parse().map_err(err)?;
        let raw = load_mnist(&data_dir, split).map_err(err)?;
        build_contaminated_sample(&raw, bulk_class, &anomalies, seed).map(|inner| Self { inner }).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.features)
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.class_labels.clone()
    }

    #[getter]
    fn is_anomaly(&self) -> Vec<bool> {
        self.inner.is_anomaly().to_vec()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}

/// A fitted PCA or autoencoder manifold.
#[pyclass(frozen)]
struct Manifold {
    inner: ManifoldModel,
}

#[pymethods]
impl Manifold {
    /// PCA with either a fixed latent size or an explained-variance target.
    #[staticmethod]
    #[pyo3(signature = (sample, latent=None, variance=None))]
    fn pca(sample: &Sample, latent: Option<usize>, variance: Option<f64>) -> PyResult<Self> {
        let target = match (latent, variance) {
            (Some(m), None) => PcaTarget::Latent(m),
            (None, Some(v)) => PcaTarget::Variance(v),
            _ => return Err(PyValueError::new_err("give exactly one of latent, variance")),
        };
        let spec = ManifoldSpec::Pca { target };
        spec.fit(sample.inner.features.view()).map(|inner| Self { inner }).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (sample, latent, hidden=None, epochs=None, seed=0))]
    fn autoencoder(sample: &Sample, latent: usize, hidden: Option<usize>, epochs: Option<usize>, seed: u64) -> PyResult<Self> {
        let mut config = AeConfig { latent, seed, ..Default::default() };
        if let Some(h) = hidden {
            config.hidden = h;
        }
        if let Some(e) = epochs {
            config.epochs = e;
        }
        ManifoldSpec::Ae { config }.fit(sample.inner.features.view()).map(|inner| Self { inner }).map_err(err)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    fn encode(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let x = to_matrix(&rows)?;
        self.inner.encode(x.view()).map(|z| to_rows(&z)).map_err(err)
    }

    fn reconstruction_error(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = to_matrix(&rows)?;
        self.inner.reconstruction_error(x.view()).map(|e| e.to_vec()).map_err(err)
    }
}

/// Anomaly scores of `rows` under one detector (`lof`, `iforest`, `ee`,
/// `ocsvm`, `knn`); `params` overrides the defaults.
#[pyfunction]
#[pyo3(signature = (rows, method, params=None))]
fn score(rows: Vec<Vec<f64>>, method: &str, params: Option<HashMap<String, String>>) -> PyResult<Vec<f64>> {
    let kind: DetectorKind = method.parse().map_err(err)?;
    let overrides: Vec<(String, String)> = params.unwrap_or_default().into_iter().collect();
    let spec = DetectorSpec::from_overrides(kind, &overrides).map_err(err)?;
    let z = to_matrix(&rows)?;
    spec.score(z.view()).map(|s| s.scores).map_err(err)
}

/// Reconstruction-error scores of the sample under a manifold.
#[pyfunction]
fn reconstruction_scores(manifold: &Manifold, sample: &Sample) -> PyResult<Vec<f64>> {
    re_scores(&manifold.inner, sample.inner.features.view()).map(|s| s.scores).map_err(err)
}

/// Indices of the `k` highest scores, ties broken by lower index.
#[pyfunction]
fn top_k(scores: Vec<f64>, k: usize) -> PyResult<Vec<usize>> {
    let s = AnomalyScores::new("py", scores, Default::default()).map_err(err)?;
    top_k_flags(&s, k).map(|f| f.indices().to_vec()).map_err(err)
}

/// Recall, precision and F1 of a flag set (or the union of several).
#[pyfunction]
fn evaluate(sample: &Sample, flags: Vec<Vec<usize>>) -> PyResult<HashMap<&'static str, f64>> {
    let n = sample.inner.len();
    let sets = flags
        .into_iter()
        .map(|f| FlagSet::new(f.clone(), f.len(), "py", n))
        .collect::<pegasus::Result<Vec<_>>>()
        .map_err(err)?;
    let refs: Vec<&FlagSet> = sets.iter().collect();
    let union = combine_flags(&refs).map_err(err)?;
    let c = confusion(&union, &sample.inner).map_err(err)?;
    Ok(HashMap::from([("recall", recall(&c)), ("precision", precision(&c)), ("f1", f1(&c))]))
}

/// Run an experiment config file and return the result table as JSON.
#[pyfunction]
fn run_config(path: PathBuf) -> PyResult<String> {
    let loaded = ExperimentConfig::load(&path).map_err(err)?;
    let table = run_experiment(&loaded.config, Some(loaded.sha256)).map_err(err)?;
    serde_json::to_string(&table).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Horse example membership grid as JSON.
#[pyfunction]
#[pyo3(signature = (seed=0, k_neighbors=20))]
fn pegasus_demo(seed: u64, k_neighbors: usize) -> PyResult<String> {
    let lof = LofParams { k_neighbors, ..Default::default() };
    let result = run_pegasus_demo(&PegasusConfig::default(), &lof, seed).map_err(err)?;
    serde_json::to_string(&result).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Squared-distance moments of uniform pairs and the Gaussian radial mode.
#[pyfunction]
#[pyo3(signature = (dim, pairs=100_000, seed=0))]
fn cod_demo(dim: usize, pairs: usize, seed: u64) -> PyResult<HashMap<&'static str, f64>> {
    let r = curse_of_dim_demo(dim, pairs, seed).map_err(err)?;
    Ok(HashMap::from([
        ("mean_sq_dist", r.mean_sq_dist),
        ("std_sq_dist", r.std_sq_dist),
        ("standard_error", r.standard_error),
        ("gaussian_peak_radius", r.gaussian_peak_radius),
    ]))
}

#[pymodule]
fn pypegasus(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", pegasus::VERSION)?;
    m.add_class::<Sample>()?;
    m.add_class::<Manifold>()?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruction_scores, m)?)?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(pegasus_demo, m)?)?;
    m.add_function(wrap_pyfunction!(cod_demo, m)?)?;
    Ok(())
}
