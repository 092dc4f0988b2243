use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rgb2hs_core::colorimetry::{self, CmfTable, DatasetStats};
use rgb2hs_core::training::{History, LogRecord, TrainingPair};
use rgb2hs_core::{dataset_io, experiment, gradsuite, metrics, models, tiling, training, Error};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::NonFinite(_) | Error::Check(_) => PyArithmeticError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for rgb2hs_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// A 31-band cube stored pixel-major (`h * w * 31` floats).
#[pyclass(name = "SpectralImage", from_py_object)]
#[derive(Clone)]
struct PySpectralImage {
    inner: colorimetry::SpectralImage,
}

#[pymethods]
impl PySpectralImage {
    #[new]
    fn new(height: usize, width: usize, data: Vec<f32>) -> PyResult<Self> {
        Ok(PySpectralImage {
            inner: colorimetry::SpectralImage::new(height, width, data).py()?,
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(PySpectralImage {
            inner: dataset_io::read_hsi(path).py()?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        dataset_io::write_hsi(&self.inner, path).py()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn data(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn pixel(&self, y: usize, x: usize) -> PyResult<Vec<f32>> {
        if y >= self.inner.height() || x >= self.inner.width() {
            return Err(PyValueError::new_err(format!("pixel ({y}, {x}) out of range")));
        }
        Ok(self.inner.pixel(y, x).to_vec())
    }

    fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> PyResult<Self> {
        Ok(PySpectralImage {
            inner: self.inner.crop(y0, x0, h, w).py()?,
        })
    }

    fn min_max(&self) -> (f32, f32) {
        self.inner.min_max()
    }

    fn __repr__(&self) -> String {
        format!("SpectralImage({}x{}x31)", self.inner.height(), self.inner.width())
    }
}

/// An 8-bit sRGB image stored pixel-major (`h * w * 3` bytes).
#[pyclass(name = "SrgbImage", from_py_object)]
#[derive(Clone)]
struct PySrgbImage {
    inner: colorimetry::SrgbImage,
}

#[pymethods]
impl PySrgbImage {
    #[new]
    fn new(height: usize, width: usize, data: Vec<u8>) -> PyResult<Self> {
        Ok(PySrgbImage {
            inner: colorimetry::SrgbImage::new(height, width, data).py()?,
        })
    }

    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        Ok(PySrgbImage {
            inner: dataset_io::read_ppm(path).py()?,
        })
    }

    fn write(&self, path: &str) -> PyResult<()> {
        dataset_io::write_ppm(&self.inner, path).py()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn data(&self) -> Vec<u8> {
        self.inner.data().to_vec()
    }

    fn pixel(&self, y: usize, x: usize) -> PyResult<(u8, u8, u8)> {
        if y >= self.inner.height() || x >= self.inner.width() {
            return Err(PyValueError::new_err(format!("pixel ({y}, {x}) out of range")));
        }
        let [r, g, b] = self.inner.pixel(y, x);
        Ok((r, g, b))
    }

    fn __repr__(&self) -> String {
        format!("SrgbImage({}x{})", self.inner.height(), self.inner.width())
    }
}

#[pyclass(name = "GeneratorConfig", from_py_object)]
#[derive(Clone)]
struct PyGeneratorConfig {
    inner: models::GeneratorConfig,
}

#[pymethods]
impl PyGeneratorConfig {
    /// Full network for `input_size`, optionally restricted to the `skips`
    /// shallowest skip connections with the main branch off.
    #[new]
    #[pyo3(signature = (input_size = 256, skips = None))]
    fn new(input_size: usize, skips: Option<usize>) -> Self {
        let inner = match skips {
            Some(k) => models::GeneratorConfig::with_skips(input_size, k),
            None => models::GeneratorConfig::full(input_size),
        };
        PyGeneratorConfig { inner }
    }

    /// Sets a field by name, e.g. `cfg.set("base_filters", "16")`.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        if self.inner.set(key, value).py()? {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("unknown generator key {key:?}")))
        }
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().py()
    }

    #[getter]
    fn input_size(&self) -> usize {
        self.inner.input_size
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth
    }

    #[getter]
    fn skip_mask(&self) -> Vec<bool> {
        self.inner.skip_mask.clone()
    }

    #[getter]
    fn main_branch_enabled(&self) -> bool {
        self.inner.main_branch_enabled
    }

    fn encoder_widths(&self) -> Vec<usize> {
        self.inner.encoder_widths()
    }

    fn receptive_field(&self) -> usize {
        models::receptive_field(&self.inner)
    }

    fn label(&self) -> String {
        self.inner.label()
    }

    fn to_manifest(&self) -> String {
        self.inner.to_manifest()
    }

    /// The skip ladder starting from this configuration.
    fn skip_ladder(&self) -> Vec<PyGeneratorConfig> {
        experiment::skip_ladder(&self.inner)
            .into_iter()
            .map(|inner| PyGeneratorConfig { inner })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!("GeneratorConfig({})", self.inner.label())
    }
}

#[pyclass(name = "Generator", from_py_object)]
#[derive(Clone)]
struct PyGenerator {
    inner: models::UNetGenerator,
}

#[pymethods]
impl PyGenerator {
    #[new]
    #[pyo3(signature = (config = None, seed = 0))]
    fn new(config: Option<PyGeneratorConfig>, seed: u64) -> PyResult<Self> {
        let config = config.map(|c| c.inner).unwrap_or_default();
        Ok(PyGenerator {
            inner: models::build_generator(&config, seed).py()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyGenerator {
            inner: models::UNetGenerator::load(path).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[getter]
    fn config(&self) -> PyGeneratorConfig {
        PyGeneratorConfig {
            inner: self.inner.config().clone(),
        }
    }

    fn param_count(&self) -> usize {
        self.inner.params().scalar_count()
    }

    fn param_names(&self) -> Vec<String> {
        self.inner.params().iter().map(|(n, _)| n.to_string()).collect()
    }

    /// Tiled reconstruction of an image at least one tile in size.
    fn reconstruct(&self, py: Python<'_>, rgb: &PySrgbImage) -> PyResult<PySpectralImage> {
        let inner = py.detach(|| tiling::reconstruct(&self.inner, &rgb.inner)).py()?;
        Ok(PySpectralImage { inner })
    }
}

#[pyclass(name = "Discriminator", from_py_object)]
#[derive(Clone)]
struct PyDiscriminator {
    inner: models::PatchDiscriminator,
}

#[pymethods]
impl PyDiscriminator {
    #[new]
    #[pyo3(signature = (seed = 0, base_filters = 64))]
    fn new(seed: u64, base_filters: usize) -> PyResult<Self> {
        let config = models::DiscriminatorConfig {
            base_filters,
            ..models::DiscriminatorConfig::default()
        };
        Ok(PyDiscriminator {
            inner: models::build_discriminator_with(&config, seed).py()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyDiscriminator {
            inner: models::PatchDiscriminator::load(path).py()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    fn param_count(&self) -> usize {
        self.inner.params().scalar_count()
    }

    fn layer_count(&self) -> usize {
        self.inner.layer_count()
    }

    fn output_size(&self, n: usize) -> usize {
        self.inner.config().output_size(n)
    }
}

fn record_dict<'py>(py: Python<'py>, r: &LogRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", r.step)?;
    d.set_item("cycle", r.cycle)?;
    d.set_item("phase", r.phase.tag())?;
    d.set_item("d_loss_real", r.terms.d_loss_real)?;
    d.set_item("d_loss_fake", r.terms.d_loss_fake)?;
    d.set_item("g_adv_loss", r.terms.g_adv_loss)?;
    d.set_item("g_l1_loss", r.terms.g_l1_loss)?;
    d.set_item("g_total", r.terms.g_total)?;
    Ok(d)
}

/// Alternating adversarial training over rendered pairs.
#[pyclass(name = "Trainer")]
struct PyTrainer {
    inner: training::Trainer,
}

#[pymethods]
impl PyTrainer {
    /// `settings` holds training keys such as `epochs`, `lambda_l1` or
    /// `d_iters_per_cycle`; `crop_size` defaults to the generator input.
    #[new]
    #[pyo3(signature = (generator, discriminator, settings = None))]
    fn new(
        generator: &PyGenerator,
        discriminator: &PyDiscriminator,
        settings: Option<&Bound<'_, PyDict>>,
    ) -> PyResult<Self> {
        let mut config = training::TrainConfig {
            crop_size: generator.inner.config().input_size,
            ..training::TrainConfig::default()
        };
        if let Some(s) = settings {
            for (k, v) in s.iter() {
                let key: String = k.extract()?;
                let value = v.str()?.to_string();
                if !config.set(&key, &value).py()? {
                    return Err(PyValueError::new_err(format!("unknown training key {key:?}")));
                }
            }
        }
        Ok(PyTrainer {
            inner: training::Trainer::new(generator.inner.clone(), discriminator.inner.clone(), config).py()?,
        })
    }

    /// Runs the remaining epochs on `(rgb, hs)` pairs and returns the
    /// per-step loss records.
    fn run<'py>(
        &mut self,
        py: Python<'py>,
        pairs: Vec<(PySrgbImage, PySpectralImage)>,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let data: Vec<TrainingPair> = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (rgb, hs))| TrainingPair {
                id: format!("pair_{i}"),
                rgb: rgb.inner,
                hs: hs.inner,
            })
            .collect();
        let mut history = History::default();
        self.inner.run(&data, &mut history).py()?;
        history.records.iter().map(|r| record_dict(py, r)).collect()
    }

    fn set_epochs(&mut self, epochs: usize) {
        self.inner.set_epochs(epochs);
    }

    #[getter]
    fn step_count(&self) -> u64 {
        self.inner.step_count()
    }

    #[getter]
    fn epochs_done(&self) -> usize {
        self.inner.epochs_done()
    }

    #[getter]
    fn generator(&self) -> PyGenerator {
        PyGenerator {
            inner: self.inner.gen.clone(),
        }
    }

    #[getter]
    fn discriminator(&self) -> PyDiscriminator {
        PyDiscriminator {
            inner: self.inner.disc.clone(),
        }
    }

    fn save_state(&self, dir: &str) -> PyResult<()> {
        self.inner.save_state(dir).py()
    }

    #[staticmethod]
    fn load_state(dir: &str) -> PyResult<Self> {
        Ok(PyTrainer {
            inner: training::Trainer::load_state(dir).py()?,
        })
    }
}

/// `(global_min, global_max)` normalization statistics of training cubes.
#[pyfunction]
fn compute_stats(images: Vec<PySpectralImage>) -> PyResult<(f64, f64)> {
    let imgs: Vec<_> = images.into_iter().map(|i| i.inner).collect();
    let s = colorimetry::compute_stats(&imgs).py()?;
    Ok((s.global_min, s.global_max))
}

/// Renders a raw cube into its sRGB image and the normalized target.
#[pyfunction]
fn render(image: &PySpectralImage, global_min: f64, global_max: f64) -> (PySrgbImage, PySpectralImage) {
    let stats = DatasetStats { global_min, global_max };
    let (rgb, hs) = colorimetry::render_pair(&image.inner, &stats, CmfTable::cie1964_10deg());
    (PySrgbImage { inner: rgb }, PySpectralImage { inner: hs })
}

#[pyfunction]
fn spectrum_to_xyz(spectrum: Vec<f32>) -> PyResult<(f64, f64, f64)> {
    if spectrum.len() != colorimetry::BANDS {
        return Err(PyValueError::new_err(format!(
            "expected 31 bands, got {}",
            spectrum.len()
        )));
    }
    let [x, y, z] = colorimetry::spectrum_to_xyz(&spectrum, CmfTable::cie1964_10deg());
    Ok((x, y, z))
}

#[pyfunction]
fn xyz_to_srgb(x: f64, y: f64, z: f64) -> (u8, u8, u8) {
    let [r, g, b] = colorimetry::xyz_pixel_to_srgb([x, y, z]);
    (r, g, b)
}

#[pyfunction]
fn wavelengths() -> Vec<f32> {
    colorimetry::wavelengths().to_vec()
}

#[pyfunction]
fn ciede2000(lab1: (f64, f64, f64), lab2: (f64, f64, f64)) -> f64 {
    metrics::ciede2000([lab1.0, lab1.1, lab1.2], [lab2.0, lab2.1, lab2.2])
}

/// RMSE, RMSERel, GFC and ΔE00 of one estimate with black pixels masked.
#[pyfunction]
fn evaluate<'py>(
    py: Python<'py>,
    reference: &PySpectralImage,
    estimate: &PySpectralImage,
) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::evaluate_image(&reference.inner, &estimate.inner, CmfTable::cie1964_10deg()).py()?;
    let d = PyDict::new(py);
    d.set_item("rmse", r.rmse)?;
    d.set_item("rmse_rel", r.rmse_rel)?;
    d.set_item("gfc", r.gfc)?;
    d.set_item("de00", r.delta_e00)?;
    d.set_item("valid_pixels", r.valid_pixel_count)?;
    Ok(d)
}

/// `(rows, cols, effective_height, effective_width)` of the tile grid.
#[pyfunction]
#[pyo3(signature = (height, width, tile_size = tiling::DEFAULT_TILE))]
fn plan_tiles(height: usize, width: usize, tile_size: usize) -> PyResult<(usize, usize, usize, usize)> {
    let g = tiling::plan_tiles(height, width, tile_size).py()?;
    Ok((g.rows, g.cols, g.effective_height, g.effective_width))
}

/// Synthetic raw cubes with hidden texture-dependent spectral structure.
#[pyfunction]
fn synth_dataset(n: usize, size: usize, seed: u64) -> Vec<PySpectralImage> {
    dataset_io::synth_dataset(n, size, seed)
        .into_iter()
        .map(|inner| PySpectralImage { inner })
        .collect()
}

#[pyfunction]
fn overfit_smoke(py: Python<'_>, size: usize, steps: usize, seed: u64) -> PyResult<f64> {
    py.detach(|| training::overfit_smoke(size, steps, seed)).py()
}

/// `(name, max_rel_error, passed)` for every check of the suite.
#[pyfunction]
#[pyo3(signature = (scope = "layer"))]
fn gradcheck(scope: &str) -> PyResult<Vec<(String, f64, bool)>> {
    let results = match scope {
        "layer" => gradsuite::layer_suite(false),
        "model" => gradsuite::model_suite(),
        other => return Err(PyValueError::new_err(format!("unknown scope {other:?}"))),
    }
    .py()?;
    Ok(results
        .into_iter()
        .map(|r| (r.name.to_string(), r.report.max_rel_error, r.passed()))
        .collect())
}

/// Runs the command line with `args` (without the program name) and
/// returns its exit code.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    rgb2hs_core::cli::main_with(std::iter::once("rgb2hs".to_string()).chain(args))
}

#[pymodule]
fn rgb2hs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySpectralImage>()?;
    m.add_class::<PySrgbImage>()?;
    m.add_class::<PyGeneratorConfig>()?;
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyDiscriminator>()?;
    m.add_class::<PyTrainer>()?;
    m.add_function(wrap_pyfunction!(compute_stats, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_to_xyz, m)?)?;
    m.add_function(wrap_pyfunction!(xyz_to_srgb, m)?)?;
    m.add_function(wrap_pyfunction!(wavelengths, m)?)?;
    m.add_function(wrap_pyfunction!(ciede2000, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(plan_tiles, m)?)?;
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(overfit_smoke, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
