//! Python bindings: bundles, analysis sessions and shift metrics.
//!
//! Structured results come back as plain dicts and lists.

use std::sync::Arc;

use deephys_core::synth::generate_pair;
use deephys_core::{
    self as core, category_profile, density_curve, encode_bundle, load_bundle, novelty_scores, parse_bundle,
    save_bundle, shift_report, spearman_rho, spurious_scores, AnalysisError, BundleError, DatasetBundle, DatasetId,
    ShiftKind, SyntheticShiftSpec,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

create_exception!(deephys, DeephysError, PyException, "Base class of deephys errors.");
create_exception!(deephys, BundleFormatError, DeephysError, "A bundle failed to encode or decode.");
create_exception!(deephys, AnalysisFailure, DeephysError, "An analysis query was rejected.");

fn bundle_err(e: BundleError) -> PyErr {
    BundleFormatError::new_err(e.to_string())
}

fn analysis_err(e: AnalysisError) -> PyErr {
    AnalysisFailure::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(value).expect("analysis types serialize"))
}

fn dataset_id(raw: &str) -> PyResult<DatasetId> {
    raw.parse()
        .map_err(|_| AnalysisFailure::new_err(format!("unknown dataset id {raw:?}")))
}

/// An immutable dataset bundle.
#[pyclass(frozen, module = "deephys")]
struct Bundle {
    inner: Arc<DatasetBundle>,
}

#[pymethods]
impl Bundle {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Bundle {
            inner: Arc::new(load_bundle(path).map_err(bundle_err)?),
        })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Bundle {
            inner: Arc::new(parse_bundle(data).map_err(bundle_err)?),
        })
    }

    /// Returns `(ind, ood)` synthetic colour-shift bundles.
    #[staticmethod]
    #[pyo3(signature = (kind, categories=10, per_category=100, neurons=50, drift=0.1, noise=0.05, seed=0, thumbnails=false))]
    #[allow(clippy::too_many_arguments)]
    fn synthetic_pair(
        kind: &str,
        categories: usize,
        per_category: usize,
        neurons: usize,
        drift: f64,
        noise: f64,
        seed: u64,
        thumbnails: bool,
    ) -> PyResult<(Bundle, Bundle)> {
        let shift_kind: ShiftKind = kind.parse().map_err(|e: core::synth::SynthError| {
            pyo3::exceptions::PyValueError::new_err(e.to_string())
        })?;
        let spec = SyntheticShiftSpec {
            category_count: categories,
            images_per_category: per_category,
            neuron_count: neurons,
            shift_kind,
            drift_magnitude: drift,
            noise_sigma: noise,
            seed,
            thumbnails,
        };
        let (ind, ood) =
            generate_pair(&spec).map_err(|e| pyo3::exceptions::PyValueError::new_err(e.to_string()))?;
        Ok((Bundle { inner: Arc::new(ind) }, Bundle { inner: Arc::new(ood) }))
    }

    fn save(&self, path: &str) -> PyResult<u64> {
        save_bundle(&self.inner, path).map_err(bundle_err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &encode_bundle(&self.inner).map_err(bundle_err)?))
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    #[getter]
    fn image_count(&self) -> usize {
        self.inner.image_count()
    }

    #[getter]
    fn labels(&self) -> Vec<u32> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn layers(&self) -> Vec<(String, usize)> {
        self.inner
            .layer_specs()
            .iter()
            .map(|l| (l.name.clone(), l.neuron_count))
            .collect()
    }

    #[getter]
    fn has_thumbnails(&self) -> bool {
        self.inner.thumbnails().is_some()
    }

    /// Row-major activations of one layer as a list of rows.
    fn activations(&self, layer: &str) -> PyResult<Vec<Vec<f32>>> {
        let m = self
            .inner
            .layer(layer)
            .ok_or_else(|| AnalysisFailure::new_err(format!("no layer {layer:?}")))?;
        Ok((0..m.rows()).map(|i| m.row(i).to_vec()).collect())
    }

    fn logits(&self) -> Vec<Vec<f32>> {
        let m = self.inner.logits();
        (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
    }

    fn thumbnail<'py>(&self, py: Python<'py>, image: usize) -> Option<Bound<'py, PyBytes>> {
        self.inner.thumbnail(image).map(|png| PyBytes::new(py, png))
    }

    fn __eq__(&self, other: &Bundle) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("Bundle(name={:?}, images={})", self.inner.name(), self.inner.image_count())
    }
}

/// An InD bundle paired with OOD bundles on one layer.
#[pyclass(frozen, module = "deephys")]
struct Session {
    inner: core::AnalysisSession,
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (ind, oods, layer))]
    fn new(ind: &Bundle, oods: Vec<PyRef<'_, Bundle>>, layer: &str) -> PyResult<Self> {
        let oods: Vec<Arc<DatasetBundle>> = oods.iter().map(|b| Arc::clone(&b.inner)).collect();
        Ok(Session {
            inner: core::AnalysisSession::build(Arc::clone(&ind.inner), oods, layer).map_err(analysis_err)?,
        })
    }

    #[getter]
    fn layer(&self) -> &str {
        self.inner.layer()
    }

    #[getter]
    fn neuron_count(&self) -> usize {
        self.inner.neuron_count()
    }

    #[getter]
    fn dataset_ids(&self) -> Vec<String> {
        self.inner.dataset_ids().map(|d| d.to_string()).collect()
    }

    #[getter]
    fn dead_neurons(&self) -> Vec<usize> {
        (0..self.inner.neuron_count()).filter(|&j| self.inner.is_dead(j)).collect()
    }

    fn predictions(&self, dataset: &str) -> PyResult<Vec<u32>> {
        Ok(self.inner.predictions(dataset_id(dataset)?).map_err(analysis_err)?.to_vec())
    }

    fn normalized_activation(&self, dataset: &str, image: usize, neuron: usize) -> PyResult<f64> {
        self.inner
            .normalized_activation(dataset_id(dataset)?, image, neuron)
            .map_err(analysis_err)
    }

    fn activation_ratio(&self, dataset: &str, neuron: usize) -> PyResult<f64> {
        self.inner.activation_ratio(dataset_id(dataset)?, neuron).map_err(analysis_err)
    }

    /// `[(image_id, score), ...]`, best first.
    #[pyo3(signature = (dataset, neuron, k=9))]
    fn top_k_images(&self, dataset: &str, neuron: usize, k: usize) -> PyResult<Vec<(usize, f64)>> {
        Ok(self
            .inner
            .top_k_images(dataset_id(dataset)?, neuron, k)
            .map_err(analysis_err)?
            .into_iter()
            .map(|r| (r.image_id, r.score))
            .collect())
    }

    #[pyo3(signature = (dataset, image, limit=9, companion=None, k=9))]
    fn image_top_neurons<'py>(
        &self,
        py: Python<'py>,
        dataset: &str,
        image: usize,
        limit: usize,
        companion: Option<&str>,
        k: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let id = dataset_id(dataset)?;
        let companion = companion.map(dataset_id).transpose()?.unwrap_or(self.inner.default_companion(id));
        let view = self
            .inner
            .image_top_neurons_with(id, image, limit, companion, k)
            .map_err(analysis_err)?;
        serialize(py, &view)
    }

    /// `[(neuron_id, mean score), ...]` over the given images.
    #[pyo3(signature = (dataset, images, limit=9))]
    fn category_top_neurons(&self, dataset: &str, images: Vec<usize>, limit: usize) -> PyResult<Vec<(usize, f64)>> {
        Ok(self
            .inner
            .category_top_neurons(dataset_id(dataset)?, &images, limit)
            .map_err(analysis_err)?
            .into_iter()
            .map(|r| (r.neuron_id, r.score))
            .collect())
    }

    fn images_of_category(&self, dataset: &str, category: usize) -> PyResult<Vec<usize>> {
        self.inner
            .images_of_category(dataset_id(dataset)?, category)
            .map_err(analysis_err)
    }

    fn confusion_set(&self, dataset: &str, a: usize, b: usize) -> PyResult<Vec<usize>> {
        Ok(self
            .inner
            .confusion_set(dataset_id(dataset)?, a, b)
            .map_err(analysis_err)?
            .image_ids)
    }

    fn category_profile(&self, dataset: &str, neuron: usize) -> PyResult<Vec<f64>> {
        Ok(category_profile(&self.inner, dataset_id(dataset)?, neuron)
            .map_err(analysis_err)?
            .means)
    }

    /// `[(neuron_id, score), ...]` for neurons whose novelty is positive.
    #[pyo3(signature = (ood="ood0"))]
    fn novelty_scores(&self, ood: &str) -> PyResult<Vec<(usize, f64)>> {
        Ok(novelty_scores(&self.inner, dataset_id(ood)?)
            .map_err(analysis_err)?
            .into_iter()
            .map(|s| (s.neuron_id, s.score))
            .collect())
    }

    #[pyo3(signature = (ood="ood0"))]
    fn spurious_scores(&self, ood: &str) -> PyResult<Vec<(usize, f64)>> {
        Ok(spurious_scores(&self.inner, dataset_id(ood)?)
            .map_err(analysis_err)?
            .0
            .into_iter()
            .map(|s| (s.neuron_id, s.score))
            .collect())
    }

    #[pyo3(signature = (ood="ood0"))]
    fn shift_report<'py>(&self, py: Python<'py>, ood: &str) -> PyResult<Bound<'py, PyAny>> {
        serialize(py, &shift_report(&self.inner, dataset_id(ood)?).map_err(analysis_err)?)
    }

    /// Full report document as a JSON string, as written by `deephys analyze`.
    #[pyo3(signature = (top_k=9, digests=false))]
    fn report_json(&self, top_k: usize, digests: bool) -> PyResult<String> {
        Ok(core::ReportDocument::build(&self.inner, top_k, digests)
            .map_err(analysis_err)?
            .to_json_pretty())
    }
}

#[pyfunction(name = "spearman_rho")]
fn py_spearman_rho(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    spearman_rho(&x, &y).map_err(analysis_err)
}

/// `[(x, density), ...]` Gaussian KDE samples.
#[pyfunction(name = "density_curve")]
#[pyo3(signature = (scores, points=128))]
fn py_density_curve(scores: Vec<f64>, points: usize) -> PyResult<Vec<(f64, f64)>> {
    Ok(density_curve(&scores, points)
        .map_err(analysis_err)?
        .into_iter()
        .map(|p| (p.x, p.density))
        .collect())
}

#[pymodule]
fn deephys(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Bundle>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(py_spearman_rho, m)?)?;
    m.add_function(wrap_pyfunction!(py_density_curve, m)?)?;
    m.add("DeephysError", m.py().get_type::<DeephysError>())?;
    m.add("BundleFormatError", m.py().get_type::<BundleFormatError>())?;
    m.add("AnalysisFailure", m.py().get_type::<AnalysisFailure>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
