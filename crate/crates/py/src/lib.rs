//! Python bindings for the `stseg` segmentation library.
//!
//! Volumes cross the boundary as flat Python lists in `t, y, x` (and channel) order,
//! so the module has no dependency on numpy.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use stseg::eval::{GroundTruth, PrCurve, Scores, DEFAULT_TOLERANCE_FRACTION};
use stseg::io::{load_frames, read_ground_truth, write_frames, write_ground_truth};
use stseg::pipeline::{self, SegmentationResult};
use stseg::synth::{synth_video, SyntheticSpec};
use stseg::ucm::SegmentationVolume;
use stseg::video::{Dims, ScalarVolume, VideoVolume};
use stseg::{Error, ErrorClass, PipelineConfig};

create_exception!(pystseg, StsegError, PyRuntimeError, "Base class for all segmentation errors.");
create_exception!(pystseg, ConfigError, StsegError, "Invalid configuration value.");
create_exception!(pystseg, InputError, StsegError, "Unreadable or malformed input data.");
create_exception!(pystseg, NumericalError, StsegError, "A numerical stage failed.");

fn to_py(err: Error) -> PyErr {
    let message = err.to_string();
    match err.class() {
        ErrorClass::Config => ConfigError::new_err(message),
        ErrorClass::Input => InputError::new_err(message),
        ErrorClass::Numerical => NumericalError::new_err(message),
    }
}

trait OrPy<T> {
    fn or_py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for stseg::Result<T> {
    fn or_py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Pipeline configuration. Keyword arguments override the defaults.
#[pyclass(name = "Config", module = "pystseg", skip_from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: PipelineConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**overrides))]
    fn new(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = Self { inner: PipelineConfig::default() };
        if let Some(kwargs) = overrides {
            for (key, value) in kwargs.iter() {
                cfg.set(&key.extract::<String>()?, &value)?;
            }
        }
        Ok(cfg)
    }

    /// Parses a flat `key = value` file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: PipelineConfig::load(&path).or_py()? })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self { inner: PipelineConfig::from_str(text).or_py()? })
    }

    #[staticmethod]
    fn keys() -> Vec<&'static str> {
        PipelineConfig::KEYS.to_vec()
    }

    /// Sets one key. Lists become comma separated values; `None` clears optional keys.
    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        let text = value_text(value)?;
        self.inner.set(key, &text).or_py()
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().or_py()
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!("Config(k={}, scales={:?}, reduction={})", self.inner.k, self.inner.scales, self.inner.reduction)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn scales(&self) -> Vec<f64> {
        self.inner.scales.clone()
    }

    #[getter]
    fn levels(&self) -> usize {
        self.inner.levels
    }

    #[getter]
    fn reduction(&self) -> bool {
        self.inner.reduction
    }
}

fn value_text(value: &Bound<'_, PyAny>) -> PyResult<String> {
    if value.is_none() {
        return Ok("none".into());
    }
    if let Ok(b) = value.extract::<bool>() {
        return Ok(b.to_string());
    }
    if let Ok(s) = value.extract::<String>() {
        return Ok(s);
    }
    if let Ok(list) = value.cast::<PyList>() {
        let parts = list.iter().map(|item| value_text(&item)).collect::<PyResult<Vec<_>>>()?;
        return Ok(parts.join(","));
    }
    Ok(value.str()?.to_string())
}

/// RGB video with values in `[0, 1]`.
#[pyclass(name = "Video", module = "pystseg", skip_from_py_object)]
#[derive(Clone)]
pub struct PyVideo {
    inner: VideoVolume,
}

#[pymethods]
impl PyVideo {
    /// `data` holds `frames * height * width * 3` interleaved RGB values.
    #[new]
    fn new(frames: usize, height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: VideoVolume::new(frames, height, width, data).or_py()? })
    }

    #[staticmethod]
    fn from_gray(frames: usize, height: usize, width: usize, gray: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: VideoVolume::from_gray(frames, height, width, &gray).or_py()? })
    }

    #[staticmethod]
    #[pyo3(signature = (directory, pattern = "*.png"))]
    fn load(directory: PathBuf, pattern: &str) -> PyResult<Self> {
        Ok(Self { inner: load_frames(&directory, pattern).or_py()? })
    }

    fn save(&self, directory: PathBuf) -> PyResult<()> {
        write_frames(&self.inner, &directory).or_py()
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.frames(), self.inner.height(), self.inner.width())
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn frame(&self, t: usize) -> PyResult<Vec<f64>> {
        check_frame(t, self.inner.frames())?;
        Ok(self.inner.frame(t).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.frames()
    }

    fn __repr__(&self) -> String {
        let (t, h, w) = self.shape();
        format!("Video(frames={t}, height={h}, width={w})")
    }
}

fn check_frame(t: usize, frames: usize) -> PyResult<()> {
    if t >= frames {
        return Err(PyIndexError::new_err(format!("frame {t} out of range for {frames} frames")));
    }
    Ok(())
}

/// Annotated label volumes, one or more annotators.
#[pyclass(name = "GroundTruth", module = "pystseg", skip_from_py_object)]
#[derive(Clone)]
pub struct PyGroundTruth {
    inner: GroundTruth,
}

#[pymethods]
impl PyGroundTruth {
    /// `annotators[a][i]` is the flat label map of annotated frame `frames[i]`.
    #[new]
    fn new(height: usize, width: usize, frames: Vec<usize>, annotators: Vec<Vec<Vec<u32>>>) -> PyResult<Self> {
        Ok(Self { inner: GroundTruth::new(height, width, frames, annotators).or_py()? })
    }

    #[staticmethod]
    fn load(directory: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: read_ground_truth(&directory).or_py()? })
    }

    fn save(&self, directory: PathBuf) -> PyResult<()> {
        write_ground_truth(&self.inner, &directory).or_py()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn frames(&self) -> Vec<usize> {
        self.inner.frames().to_vec()
    }

    fn annotators(&self) -> Vec<Vec<Vec<u32>>> {
        self.inner.annotators().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "GroundTruth(height={}, width={}, frames={}, annotators={})",
            self.inner.height(),
            self.inner.width(),
            self.inner.frames().len(),
            self.inner.annotators().len()
        )
    }
}

/// One level of the segmentation hierarchy.
#[pyclass(name = "Segmentation", module = "pystseg", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySegmentation {
    inner: SegmentationVolume,
}

#[pymethods]
impl PySegmentation {
    #[new]
    #[pyo3(signature = (frames, height, width, labels, threshold = 0.0))]
    fn new(frames: usize, height: usize, width: usize, labels: Vec<u32>, threshold: f64) -> PyResult<Self> {
        let dims = Dims::new(frames, height, width);
        if labels.len() != dims.len() {
            return Err(PyValueError::new_err(format!("expected {} labels, got {}", dims.len(), labels.len())));
        }
        Ok(Self { inner: SegmentationVolume::from_labels(dims, labels, threshold) })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let d = self.inner.dims();
        (d.frames, d.height, d.width)
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold()
    }

    #[getter]
    fn region_count(&self) -> usize {
        self.inner.region_count()
    }

    fn labels(&self) -> Vec<u32> {
        self.inner.labels().to_vec()
    }

    fn frame(&self, t: usize) -> PyResult<Vec<u32>> {
        check_frame(t, self.inner.dims().frames)?;
        Ok(self.inner.frame(t).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Segmentation(regions={}, threshold={:.4})", self.inner.region_count(), self.inner.threshold())
    }
}

/// Output of a full pipeline run.
#[pyclass(name = "SegmentResult", module = "pystseg", frozen)]
pub struct PySegmentResult {
    inner: SegmentationResult,
}

#[pymethods]
impl PySegmentResult {
    #[getter]
    fn levels(&self) -> Vec<PySegmentation> {
        self.inner.levels.iter().cloned().map(|inner| PySegmentation { inner }).collect()
    }

    #[getter]
    fn thresholds(&self) -> Vec<f64> {
        self.inner.thresholds.clone()
    }

    #[getter]
    fn region_counts(&self) -> Vec<usize> {
        self.inner.hierarchy.region_counts.clone()
    }

    /// Strongest spatial boundary response per voxel.
    fn boundaries(&self) -> Vec<f64> {
        self.inner.boundary.boundaries.spatial_max().data
    }

    fn motion(&self) -> Option<Vec<f64>> {
        self.inner.boundary.motion.as_ref().map(|m| m.data.clone())
    }

    /// Spatial ultrametric contour map, one value per voxel.
    fn ucm(&self) -> Vec<f64> {
        self.inner.ucm.spatial.data.clone()
    }

    fn __repr__(&self) -> String {
        format!("SegmentResult(levels={}, basins={})", self.inner.levels.len(), self.inner.hierarchy.basins)
    }
}

fn resolve(config: Option<&PyConfig>) -> PipelineConfig {
    config.map(|c| c.inner.clone()).unwrap_or_default()
}

/// Runs the whole pipeline on an in-memory video.
#[pyfunction]
#[pyo3(signature = (video, config = None))]
fn segment(py: Python<'_>, video: &PyVideo, config: Option<&PyConfig>) -> PyResult<PySegmentResult> {
    let cfg = resolve(config);
    let inner = py.detach(|| pipeline::segment(&video.inner, &cfg)).or_py()?;
    Ok(PySegmentResult { inner })
}

/// Boundary stage only. Returns a dict of flat per-voxel lists.
#[pyfunction]
#[pyo3(signature = (video, config = None))]
fn boundaries<'py>(py: Python<'py>, video: &PyVideo, config: Option<&PyConfig>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = resolve(config);
    let result = py.detach(|| pipeline::compute_boundaries(&video.inner, &cfg)).or_py()?;
    let out = PyDict::new(py);
    out.set_item("spatial", result.boundaries.spatial_max().data)?;
    let channels: Vec<Vec<f64>> = result.boundaries.channels().iter().map(|c: &ScalarVolume| c.data.clone()).collect();
    out.set_item("channels", channels)?;
    out.set_item("motion", result.motion.map(|m| m.data))?;
    Ok(out)
}

fn curve_dict<'py>(py: Python<'py>, curve: &PrCurve) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("thresholds", &curve.thresholds)?;
    d.set_item("precision", &curve.precision)?;
    d.set_item("recall", &curve.recall)?;
    d.set_item("f_measure", &curve.f_measure)?;
    Ok(d)
}

fn scores_dict<'py>(py: Python<'py>, s: &Scores) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("ods", s.ods)?;
    d.set_item("oss", s.oss)?;
    d.set_item("ap", s.ap)?;
    Ok(d)
}

/// Boundary and volume precision-recall of a hierarchy against ground truth.
#[pyfunction]
#[pyo3(signature = (levels, ground_truth, tolerance_fraction = DEFAULT_TOLERANCE_FRACTION))]
fn evaluate<'py>(
    py: Python<'py>,
    levels: Vec<PyRef<'py, PySegmentation>>,
    ground_truth: &PyGroundTruth,
    tolerance_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let levels: Vec<SegmentationVolume> = levels.iter().map(|l| l.inner.clone()).collect();
    let gt = &ground_truth.inner;
    let report = py.detach(|| pipeline::evaluate(&levels, gt, tolerance_fraction)).or_py()?;
    let out = PyDict::new(py);
    for (name, curve, scores) in [
        ("bpr", &report.bpr, &report.scores.bpr),
        ("vpr", &report.vpr, &report.scores.vpr),
    ] {
        let d = scores_dict(py, scores)?;
        d.set_item("curve", curve_dict(py, curve)?)?;
        out.set_item(name, d)?;
    }
    Ok(out)
}

/// Moving-rectangle sequence with its ground truth.
#[pyfunction]
#[pyo3(signature = (frames = 10, height = 32, width = 32, speed = 1.0, noise = 0.02, seed = 0))]
fn synth(frames: usize, height: usize, width: usize, speed: f64, noise: f64, seed: u64) -> PyResult<(PyVideo, PyGroundTruth)> {
    let spec = SyntheticSpec::moving_rectangle(frames, height, width, speed, noise, seed);
    let (video, gt) = synth_video(&spec).or_py()?;
    Ok((PyVideo { inner: video }, PyGroundTruth { inner: gt }))
}

/// Reads the hierarchy levels written by a pipeline run.
#[pyfunction]
fn read_levels(output: PathBuf) -> PyResult<Vec<PySegmentation>> {
    let levels = pipeline::read_levels(&output).or_py()?;
    Ok(levels.into_iter().map(|inner| PySegmentation { inner }).collect())
}

/// Runs the pipeline on a frame directory and writes every artefact to `output`.
///
/// Returns the per-level region counts (empty when `boundaries_only`).
#[pyfunction]
#[pyo3(signature = (input, output, config = None, boundaries_only = false))]
fn run(py: Python<'_>, input: PathBuf, output: PathBuf, config: Option<&PyConfig>, boundaries_only: bool) -> PyResult<Vec<usize>> {
    let cfg = resolve(config);
    let manifest = py
        .detach(|| {
            if boundaries_only {
                pipeline::run_boundaries(&cfg, &input, &output)
            } else {
                pipeline::run_pipeline(&cfg, &input, &output)
            }
        })
        .or_py()?;
    Ok(manifest.hierarchy.map(|h| h.region_counts).unwrap_or_default())
}

#[pymodule]
fn pystseg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<PyConfig>()?;
    m.add_class::<PyVideo>()?;
    m.add_class::<PyGroundTruth>()?;
    m.add_class::<PySegmentation>()?;
    m.add_class::<PySegmentResult>()?;
    m.add_function(wrap_pyfunction!(segment, m)?)?;
    m.add_function(wrap_pyfunction!(boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(read_levels, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("StsegError", py.get_type::<StsegError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("InputError", py.get_type::<InputError>())?;
    m.add("NumericalError", py.get_type::<NumericalError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use pyo3::types::PyModule;

    use super::*;

    fn with_module(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>)) {
        Python::initialize();
        Python::attach(|py| {
            let m = PyModule::new(py, "pystseg").unwrap();
            pystseg(&m).unwrap();
            f(py, &m);
        });
    }

    #[test]
    fn error_classes_map_to_exception_types() {
        with_module(|py, _| {
            assert!(to_py(Error::Config("x".into())).is_instance_of::<ConfigError>(py));
            assert!(to_py(Error::EmptyGroundTruth).is_instance_of::<InputError>(py));
            let numerical = to_py(Error::TooFewNodes { n: 1, k: 2 });
            assert!(numerical.is_instance_of::<NumericalError>(py));
            assert!(numerical.is_instance_of::<StsegError>(py));
        });
    }

    #[test]
    fn keyword_overrides_accept_python_values() {
        with_module(|py, m| {
            let locals = PyDict::new(py);
            locals.set_item("m", m).unwrap();
            let cfg = py
                .eval(c"m.Config(k=3, scales=[1, 0.5], scale_weights=[0.5, 0.5], window=[5, 5], full_video=True, prior_threshold=None)", None, Some(&locals))
                .unwrap();
            let cfg = cfg.cast::<PyConfig>().unwrap().borrow();
            assert_eq!(cfg.inner.k, 3);
            assert_eq!(cfg.inner.scales, vec![1.0, 0.5]);
            assert!(cfg.inner.full_video);
            assert_eq!(cfg.inner.prior_threshold, None);
            cfg.validate().unwrap();
        });
    }

    #[test]
    fn synthetic_round_trip_through_the_module() {
        with_module(|py, m| {
            let locals = PyDict::new(py);
            locals.set_item("m", m).unwrap();
            py.run(
                c"v, gt = m.synth(frames=3, height=16, width=16, noise=0.0)
r = m.segment(v, m.Config(k=3))
s = m.evaluate(r.levels, gt)
assert r.region_counts[-1] == 1
assert s['vpr']['ods'] > 0.9, s['vpr']['ods']
try:
    m.Video(1, 2, 2, [2.0] * 12)
    raise AssertionError('out of range accepted')
except m.InputError:
    pass",
                None,
                Some(&locals),
            )
            .unwrap();
        });
    }
}
