//! Python bindings: images, saliency maps, models and the metric suite.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyConnectionError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sjbench::faithfulness::{self, BaselineKind, CurveConfig, Granularity};
use sjbench::harness::config::ModelConfig;
use sjbench::harness::dataset::{decode_image, encode_png};
use sjbench::harness::{self, EvaluateConfig};
use sjbench::model::{ModelAdapter, Scorer};
use sjbench::pointmetrics::{self, BoundingBox};
use sjbench::road::{self, ImputationConfig};
use sjbench::saliency::{self, OcclusionConfig, RiseConfig};
use sjbench::{sanity, ColorSpace, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::ScorerUnavailable(_) => PyConnectionError::new_err(e.to_string()),
        Error::Io(_) | Error::Format { .. } | Error::Ingest { .. } => PyOSError::new_err(e.to_string()),
        Error::InvalidArgument(_)
        | Error::InvalidData(_)
        | Error::InvalidState(_)
        | Error::InvalidAlignment(_)
        | Error::UndefinedCorrelation(_)
        | Error::UndefinedDrop
        | Error::MissingAnnotation(_)
        | Error::Config(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for sjbench::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Raw RGB or grayscale image with values in [0, 1], row-major, channel-last.
#[pyclass(name = "Image", module = "sjbench", frozen, from_py_object)]
#[derive(Clone)]
struct PyImage(sjbench::ImageTensor);

#[pymethods]
impl PyImage {
    #[new]
    fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> PyResult<Self> {
        sjbench::ImageTensor::new(height, width, channels, data, ColorSpace::Raw01)
            .py()
            .map(Self)
    }

    #[staticmethod]
    fn filled(height: usize, width: usize, channels: usize, value: f32) -> PyResult<Self> {
        sjbench::ImageTensor::filled(height, width, channels, value, ColorSpace::Raw01)
            .py()
            .map(Self)
    }

    /// Random image with values on the 1/255 grid.
    #[staticmethod]
    fn random(height: usize, width: usize, seed: u64) -> Self {
        Self(harness::synthetic::random_image(height, width, seed))
    }

    /// Reads a PNG or PNM file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        decode_image(&path).py().map(Self)
    }

    fn save_png(&self, path: PathBuf) -> PyResult<()> {
        encode_png(&self.0, &path).py()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.0.channels()
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn pixel(&self, row: usize, col: usize) -> PyResult<Vec<f32>> {
        if row >= self.0.height() || col >= self.0.width() {
            return Err(PyValueError::new_err(format!("pixel ({row}, {col}) out of bounds")));
        }
        Ok(self.0.pixel(row * self.0.width() + col).to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{}x{})", self.0.height(), self.0.width(), self.0.channels())
    }
}

/// Relevance grid. Postprocessed maps lie in [0, 1] with max 1 (or all zero).
#[pyclass(name = "SaliencyMap", module = "sjbench", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMap(sjbench::SaliencyMap);

#[pymethods]
impl PyMap {
    #[new]
    #[pyo3(signature = (height, width, data, postprocessed = true))]
    fn new(height: usize, width: usize, data: Vec<f32>, postprocessed: bool) -> PyResult<Self> {
        if postprocessed {
            sjbench::SaliencyMap::postprocessed(height, width, data)
        } else {
            sjbench::SaliencyMap::raw(height, width, data)
        }
        .py()
        .map(Self)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        harness::load_smap(&path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        harness::save_smap(&self.0, &path).py()
    }

    /// Drops negative relevance and min-max scales.
    fn postprocess(&self) -> PyResult<Self> {
        saliency::postprocess(&self.0).py().map(Self)
    }

    #[pyo3(signature = (kernel_size = 11, sigma = 5.0))]
    fn coarsen(&self, kernel_size: usize, sigma: f32) -> PyResult<Self> {
        saliency::coarsen(&self.0, kernel_size, sigma).py().map(Self)
    }

    fn binarize(&self, percentile: f32) -> PyResult<Self> {
        pointmetrics::binarize(&self.0, percentile).py().map(Self)
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn postprocessed(&self) -> bool {
        self.0.is_postprocessed()
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f32> {
        if row >= self.0.height() || col >= self.0.width() {
            return Err(PyValueError::new_err(format!("cell ({row}, {col}) out of bounds")));
        }
        Ok(self.0.get(row, col))
    }

    fn __repr__(&self) -> String {
        format!(
            "SaliencyMap({}x{}, postprocessed={})",
            self.0.height(),
            self.0.width(),
            self.0.is_postprocessed()
        )
    }
}

/// A black-box classifier: built-in synthetic models or a remote scorer.
#[pyclass(name = "Model", module = "sjbench", frozen)]
struct PyModel {
    inner: Arc<dyn ModelAdapter>,
}

impl PyModel {
    fn build(cfg: ModelConfig) -> PyResult<Self> {
        Ok(Self {
            inner: cfg.build().py()?,
        })
    }

    fn scorer(&self) -> Scorer<'_> {
        Scorer::new(self.inner.as_ref())
    }
}

#[pymethods]
impl PyModel {
    /// Score = mean of the region's pixel values, for class 0.
    #[staticmethod]
    #[pyo3(signature = (region, n_classes = 2))]
    fn region_mean(region: Vec<(usize, usize)>, n_classes: usize) -> PyResult<Self> {
        Self::build(ModelConfig::RegionMean { region, n_classes })
    }

    #[staticmethod]
    #[pyo3(signature = (value, n_classes = 2))]
    fn constant(value: f32, n_classes: usize) -> PyResult<Self> {
        Self::build(ModelConfig::Constant { value, n_classes })
    }

    /// `tcp:host:port` or `stdio:<command>`; `None` reads `SJ_SCORER`.
    #[staticmethod]
    #[pyo3(signature = (endpoint = None))]
    fn remote(endpoint: Option<String>) -> PyResult<Self> {
        Self::build(ModelConfig::Remote { endpoint })
    }

    /// Same JSON object as the `model` entry of a config file.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let cfg: ModelConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Self::build(cfg)
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    #[pyo3(signature = (images, target = 0))]
    fn score(&self, images: Vec<PyImage>, target: usize) -> PyResult<Vec<f32>> {
        let batch: Vec<_> = images.into_iter().map(|i| i.0).collect();
        self.scorer().score(&batch, target).py()
    }
}

fn baseline(name: &str, seed: u64) -> PyResult<BaselineKind> {
    match name {
        "mean" => Ok(BaselineKind::DatasetMean),
        "blur" => Ok(BaselineKind::blur()),
        "uniform" => Ok(BaselineKind::UniformNoise { seed }),
        other => Err(PyValueError::new_err(format!(
            "unknown baseline {other:?}; expected mean, blur or uniform"
        ))),
    }
}

fn curve_config(baseline_name: &str, radius: Option<usize>, step: f32, seed: u64) -> PyResult<CurveConfig> {
    let granularity = match radius {
        None => Granularity::Pixel,
        Some(radius) => Granularity::Region { radius },
    };
    Ok(CurveConfig::new(baseline(baseline_name, seed)?, granularity).with_step(step))
}

type CurveOut = (Vec<f32>, Vec<f32>, f64);

/// Insertion curve as `(xs, ys, auc)`.
#[pyfunction]
#[pyo3(signature = (model, image, map, baseline = "mean", radius = None, step = 0.01, seed = 0, target = 0))]
#[allow(clippy::too_many_arguments)]
fn insertion(
    model: &PyModel,
    image: &PyImage,
    map: &PyMap,
    baseline: &str,
    radius: Option<usize>,
    step: f32,
    seed: u64,
    target: usize,
) -> PyResult<CurveOut> {
    let cfg = curve_config(baseline, radius, step, seed)?;
    let c = faithfulness::insertion_curve(&model.scorer(), &image.0, &map.0, &cfg, target).py()?;
    let a = faithfulness::auc(&c);
    Ok((c.xs, c.ys, a))
}

/// Deletion curve as `(xs, ys, auc)`.
#[pyfunction]
#[pyo3(signature = (model, image, map, baseline = "mean", radius = None, step = 0.01, seed = 0, target = 0))]
#[allow(clippy::too_many_arguments)]
fn deletion(
    model: &PyModel,
    image: &PyImage,
    map: &PyMap,
    baseline: &str,
    radius: Option<usize>,
    step: f32,
    seed: u64,
    target: usize,
) -> PyResult<CurveOut> {
    let cfg = curve_config(baseline, radius, step, seed)?;
    let c = faithfulness::deletion_curve(&model.scorer(), &image.0, &map.0, &cfg, target).py()?;
    let a = faithfulness::auc(&c);
    Ok((c.xs, c.ys, a))
}

/// Mean target score over the imputed images; lower is better.
#[pyfunction]
#[pyo3(signature = (model, image, map, fractions = None, noise_std = 0.01, seed = 0, target = 0))]
fn road_score(
    model: &PyModel,
    image: &PyImage,
    map: &PyMap,
    fractions: Option<Vec<f32>>,
    noise_std: f32,
    seed: u64,
    target: usize,
) -> PyResult<f64> {
    let fractions = fractions.unwrap_or_else(road::default_fractions);
    let cfg = ImputationConfig {
        noise_std,
        ..ImputationConfig::default()
    };
    road::road_score(&model.scorer(), &image.0, &map.0, &fractions, &cfg, seed, target)
        .py()
        .map(|r| r.mean)
}

/// Masked pixels replaced by neighbour interpolation. `masked` is row-major.
#[pyfunction]
#[pyo3(signature = (image, masked, noise_std = 0.0, seed = 0))]
fn impute(image: &PyImage, masked: Vec<bool>, noise_std: f32, seed: u64) -> PyResult<PyImage> {
    let mask = road::PixelMask::new(image.0.height(), image.0.width(), masked).py()?;
    let cfg = ImputationConfig {
        noise_std,
        ..ImputationConfig::default()
    };
    road::impute(&image.0, &mask, &cfg, seed).py().map(PyImage)
}

/// Postprocessed RISE map.
#[pyfunction]
#[pyo3(signature = (model, image, n_masks = 4000, grid = 7, keep_prob = 0.5, seed = 0, target = 0))]
fn rise(
    model: &PyModel,
    image: &PyImage,
    n_masks: usize,
    grid: usize,
    keep_prob: f32,
    seed: u64,
    target: usize,
) -> PyResult<PyMap> {
    let cfg = RiseConfig {
        n_masks,
        grid_h: grid,
        grid_w: grid,
        keep_prob,
        seed,
    };
    let raw = saliency::rise(&model.scorer(), &image.0, &cfg, target).py()?;
    saliency::postprocess(&raw).py().map(PyMap)
}

/// Postprocessed occlusion map.
#[pyfunction]
#[pyo3(signature = (model, image, window = 16, stride = 8, fill = 0.0, target = 0))]
fn occlusion(
    model: &PyModel,
    image: &PyImage,
    window: usize,
    stride: usize,
    fill: f32,
    target: usize,
) -> PyResult<PyMap> {
    let cfg = OcclusionConfig { window, stride, fill };
    let raw = saliency::occlusion(&model.scorer(), &image.0, &cfg, target).py()?;
    saliency::postprocess(&raw).py().map(PyMap)
}

/// `(drop, confidence_increased)` for one sample.
#[pyfunction]
fn average_drop(orig: f32, masked: f32) -> PyResult<(f64, bool)> {
    pointmetrics::average_drop(orig, masked)
        .py()
        .map(|d| (d.drop, d.confidence_increased))
}

/// Boxes are `(class_id, x_min, y_min, x_max, y_max)`, inclusive.
#[pyfunction]
#[pyo3(signature = (map, boxes, target = 0))]
fn pointing_game(map: &PyMap, boxes: Vec<(usize, usize, usize, usize, usize)>, target: usize) -> PyResult<bool> {
    let boxes = boxes
        .into_iter()
        .map(|(c, x0, y0, x1, y1)| BoundingBox::new(c, x0, y0, x1, y1))
        .collect::<sjbench::Result<Vec<_>>>()
        .py()?;
    pointmetrics::pointing_game(&map.0, &boxes, target).py()
}

#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    sanity::spearman(&x, &y).py()
}

#[pyfunction]
fn point_biserial(b: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    sanity::point_biserial(&b, &y).py()
}

/// Runs a config file; returns `(aggregate_csv, n_exclusions)`.
#[pyfunction]
fn evaluate(config: PathBuf, maps: PathBuf, out: PathBuf) -> PyResult<(String, usize)> {
    let cfg = EvaluateConfig::load(&config).py()?;
    let res = harness::evaluate(&cfg, &maps, &out).py()?;
    Ok((res.aggregate.to_csv(), res.exclusions.len()))
}

#[pymodule]
#[pyo3(name = "sjbench")]
pub fn sjbench_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyMap>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(insertion, m)?)?;
    m.add_function(wrap_pyfunction!(deletion, m)?)?;
    m.add_function(wrap_pyfunction!(road_score, m)?)?;
    m.add_function(wrap_pyfunction!(impute, m)?)?;
    m.add_function(wrap_pyfunction!(rise, m)?)?;
    m.add_function(wrap_pyfunction!(occlusion, m)?)?;
    m.add_function(wrap_pyfunction!(average_drop, m)?)?;
    m.add_function(wrap_pyfunction!(pointing_game, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(point_biserial, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
