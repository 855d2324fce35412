//! Python bindings for the `wattgan` core crate.
//!
//! Windows and latents cross the boundary as nested lists of floats; the
//! layout is `(k, 48)` for windows and `(k, 100)` for latents.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use wattgan::checkpoint::Checkpoint;
use wattgan::detect;
use wattgan::evalr::{match_events as core_match, MatchConfig};
use wattgan::invert::{invert_from, init_latents, Aggregate, InvertConfig, LossKind};
use wattgan::net::{self, BnMode, CriticNet, GeneratorNet, LATENT_DIM, WINDOW_LEN};
use wattgan::sdtw::{self, SdtwConfig};
use wattgan::series::{self, RawSegment, SynthConfig, WindowBatch};
use wattgan::train::{self, TrainConfig};
use wattgan::{Error, Tensor3};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Numerical { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<BnMode> {
    match mode {
        "asm" | "active" => Ok(BnMode::Active),
        "ssm" | "static" => Ok(BnMode::Static),
        other => Err(PyValueError::new_err(format!(
            "mode must be 'asm' or 'ssm', got '{other}'"
        ))),
    }
}

fn parse_loss(loss: &str) -> PyResult<LossKind> {
    match loss {
        "softdtw" | "soft_dtw" => Ok(LossKind::SoftDtw),
        "euclidean" => Ok(LossKind::Euclidean),
        other => Err(PyValueError::new_err(format!(
            "loss must be 'softdtw' or 'euclidean', got '{other}'"
        ))),
    }
}

fn rows_to_tensor(rows: Vec<Vec<f64>>, channels: usize, len: usize) -> PyResult<Tensor3> {
    let k = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != channels * len) {
        return Err(PyValueError::new_err(format!(
            "expected rows of length {}, got {}",
            channels * len,
            bad.len()
        )));
    }
    Tensor3::from_vec(k, channels, len, rows.concat()).map_err(to_py)
}

fn tensor_to_rows(t: &Tensor3) -> Vec<Vec<f64>> {
    (0..t.batch()).map(|i| t.item(i).to_vec()).collect()
}

#[pyclass(name = "Generator", module = "wattgan", skip_from_py_object)]
#[derive(Clone)]
struct PyGenerator {
    inner: GeneratorNet,
}

#[pymethods]
impl PyGenerator {
    #[new]
    #[pyo3(signature = (seed=0))]
    fn new(seed: u64) -> Self {
        Self {
            inner: net::init_generator(seed),
        }
    }

    #[staticmethod]
    fn from_checkpoint(path: &str) -> PyResult<Self> {
        let ckpt = Checkpoint::load(path).map_err(to_py)?;
        Ok(Self {
            inner: ckpt.generator,
        })
    }

    /// Maps `(k, 100)` latents to `(k, 48)` windows.
    #[pyo3(signature = (z, mode="ssm"))]
    fn forward(&self, z: Vec<Vec<f64>>, mode: &str) -> PyResult<Vec<Vec<f64>>> {
        let z = rows_to_tensor(z, LATENT_DIM, 1)?;
        let x = self.inner.forward(&z, parse_mode(mode)?).map_err(to_py)?;
        Ok(tensor_to_rows(&x))
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.net.param_count()
    }

    fn __repr__(&self) -> String {
        format!("Generator(params={})", self.inner.net.param_count())
    }
}

#[pyclass(name = "Critic", module = "wattgan", skip_from_py_object)]
#[derive(Clone)]
struct PyCritic {
    inner: CriticNet,
}

#[pymethods]
impl PyCritic {
    #[new]
    #[pyo3(signature = (seed=0))]
    fn new(seed: u64) -> Self {
        Self {
            inner: net::init_critic(seed),
        }
    }

    /// Raw critic scores for `(k, 48)` windows.
    #[pyo3(signature = (x, mode="ssm"))]
    fn forward(&self, x: Vec<Vec<f64>>, mode: &str) -> PyResult<Vec<f64>> {
        let x = rows_to_tensor(x, 1, WINDOW_LEN)?;
        self.inner.forward(&x, parse_mode(mode)?).map_err(to_py)
    }

    fn max_abs_param(&self) -> f64 {
        self.inner.max_abs_param()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.net.param_count()
    }
}

#[pyfunction(name = "sdtw")]
#[pyo3(signature = (x, y, gamma=0.1))]
fn py_sdtw(x: Vec<f64>, y: Vec<f64>, gamma: f64) -> PyResult<f64> {
    sdtw::sdtw(&x, &y, &SdtwConfig { gamma }).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (x, y, gamma=0.1))]
fn sdtw_grad(x: Vec<f64>, y: Vec<f64>, gamma: f64) -> PyResult<Vec<f64>> {
    sdtw::sdtw_grad(&x, &y, &SdtwConfig { gamma }).map_err(to_py)
}

#[pyfunction]
fn dtw_exact(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    sdtw::dtw_exact(&x, &y).map_err(to_py)
}

#[pyfunction]
fn euclidean(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    sdtw::euclidean(&x, &y).map_err(to_py)
}

/// Synthetic readings and labels from a JSON profile (all keys optional).
#[pyfunction]
#[pyo3(signature = (profile_json="{}"))]
fn synth(profile_json: &str) -> PyResult<(Vec<f64>, Vec<bool>)> {
    let profile: SynthConfig =
        serde_json::from_str(profile_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = series::synth_series(&profile).map_err(to_py)?;
    Ok((s.readings, s.labels))
}

/// Min-max scaling to `[-1, 1]`; returns `(scaled, min, max)`.
#[pyfunction]
fn normalize(values: Vec<f64>) -> PyResult<(Vec<f64>, f64, f64)> {
    let labels = vec![false; values.len()];
    let seg = series::normalize(&RawSegment {
        values,
        origin: 0,
        labels,
    })
    .map_err(to_py)?;
    Ok((seg.values, seg.raw_min, seg.raw_max))
}

/// Stride-1 sliding windows of length `w`.
#[pyfunction]
#[pyo3(signature = (values, w=48))]
fn windows(values: Vec<f64>, w: usize) -> PyResult<Vec<Vec<f64>>> {
    if w == 0 || values.len() < w {
        return Err(PyValueError::new_err(format!(
            "cannot cut windows of length {w} from {} values",
            values.len()
        )));
    }
    Ok(values.windows(w).map(<[f64]>::to_vec).collect())
}

#[pyfunction]
#[pyo3(signature = (windows, epochs=30, batch_size=128, seed=0, ncritic=5, clip=0.01, lr=2e-4))]
fn train_wgan(
    windows: Vec<Vec<f64>>,
    epochs: usize,
    batch_size: usize,
    seed: u64,
    ncritic: usize,
    clip: f64,
    lr: f64,
) -> PyResult<(PyGenerator, PyCritic, Vec<f64>)> {
    let n = windows.len();
    if let Some(bad) = windows.iter().find(|r| r.len() != WINDOW_LEN) {
        return Err(PyValueError::new_err(format!(
            "training windows must have length {WINDOW_LEN}, got {}",
            bad.len()
        )));
    }
    let batch = WindowBatch {
        windows: windows.concat(),
        starts: (0..n).collect(),
        w: WINDOW_LEN,
    };
    let cfg = TrainConfig {
        epochs,
        batch_size,
        seed,
        ncritic,
        clip_c: clip,
        lr,
        ..Default::default()
    };
    let out = train::train(&[batch], &cfg).map_err(to_py)?;
    let losses = out.report.iterations.iter().map(|l| l.critic_loss).collect();
    Ok((
        PyGenerator {
            inner: out.generator,
        },
        PyCritic { inner: out.critic },
        losses,
    ))
}

/// Gradient-descent inversion of `(k, 48)` windows; returns a dict with
/// `z`, `recon`, `losses` and `latent_norms`.
#[pyfunction]
#[pyo3(signature = (generator, windows, steps=500, step_size=None, loss="softdtw", mode="asm", seed=0, gamma=0.1, mean=false))]
#[allow(clippy::too_many_arguments)]
fn invert<'py>(
    py: Python<'py>,
    generator: &PyGenerator,
    windows: Vec<Vec<f64>>,
    steps: usize,
    step_size: Option<f64>,
    loss: &str,
    mode: &str,
    seed: u64,
    gamma: f64,
    mean: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let loss = parse_loss(loss)?;
    let cfg = InvertConfig {
        steps,
        step_size,
        loss,
        bn_mode: parse_mode(mode)?,
        seed,
        aggregate: if mean { Aggregate::Mean } else { Aggregate::Sum },
        ..Default::default()
    };
    let x = rows_to_tensor(windows, 1, WINDOW_LEN)?;
    let z0 = init_latents(x.batch(), seed).map_err(to_py)?;
    let r = py
        .detach(|| invert_from(&x, &generator.inner, z0, &cfg, &SdtwConfig { gamma }))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("z", tensor_to_rows(&r.z_final))?;
    out.set_item("recon", tensor_to_rows(&r.x_recon))?;
    out.set_item("losses", r.losses)?;
    out.set_item("latent_norms", r.latent_norms)?;
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (starts, scores, threshold, w=48))]
fn critical_points(starts: Vec<usize>, scores: Vec<f64>, threshold: f64, w: usize) -> PyResult<Vec<usize>> {
    if starts.len() != scores.len() {
        return Err(PyValueError::new_err("starts and scores differ in length"));
    }
    Ok(detect::critical_points(&starts, &scores, threshold, w))
}

#[pyfunction]
#[pyo3(signature = (points, length, bandwidth=6.0))]
fn kde_curve(points: Vec<usize>, length: usize, bandwidth: f64) -> PyResult<Vec<f64>> {
    if bandwidth <= 0.0 {
        return Err(PyValueError::new_err("bandwidth must be positive"));
    }
    Ok(detect::kde_curve(&points, length, bandwidth))
}

#[pyfunction]
#[pyo3(signature = (curve, min_height=0.5))]
fn predict(curve: Vec<f64>, min_height: f64) -> Vec<usize> {
    detect::predict(&curve, min_height)
}

/// Tolerance matching; returns a dict of counts and rates.
#[pyfunction]
#[pyo3(signature = (ground_truth, predicted, r_t=24))]
fn match_events<'py>(
    py: Python<'py>,
    ground_truth: Vec<u64>,
    predicted: Vec<u64>,
    r_t: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = core_match(&ground_truth, &predicted, &MatchConfig { r_t });
    let out = PyDict::new(py);
    out.set_item("tp", r.tp)?;
    out.set_item("fn", r.fn_)?;
    out.set_item("fp", r.fp)?;
    out.set_item("precision", r.precision)?;
    out.set_item("recall", r.recall)?;
    out.set_item("f1", r.f1)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "wattgan")]
fn wattgan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LATENT_DIM", LATENT_DIM)?;
    m.add("WINDOW_LEN", WINDOW_LEN)?;
    m.add_class::<PyGenerator>()?;
    m.add_class::<PyCritic>()?;
    m.add_function(wrap_pyfunction!(py_sdtw, m)?)?;
    m.add_function(wrap_pyfunction!(sdtw_grad, m)?)?;
    m.add_function(wrap_pyfunction!(dtw_exact, m)?)?;
    m.add_function(wrap_pyfunction!(euclidean, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(windows, m)?)?;
    m.add_function(wrap_pyfunction!(train_wgan, m)?)?;
    m.add_function(wrap_pyfunction!(invert, m)?)?;
    m.add_function(wrap_pyfunction!(critical_points, m)?)?;
    m.add_function(wrap_pyfunction!(kde_curve, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(match_events, m)?)?;
    Ok(())
}
