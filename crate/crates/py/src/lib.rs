//! Python bindings: corpus generation, forward corruption, synthesis and
//! evaluation metrics. Spectrograms cross the boundary as lists of frames.

use std::path::PathBuf;

use jumpdiff::corpus::{gen_corpus as gen, Corpus as CoreCorpus, CorpusConfig, Utterance};
use jumpdiff::eval;
use jumpdiff::forward::forward_sample as core_forward;
use jumpdiff::io::read_jdmp;
use jumpdiff::predictors::{
    ContentModel, ContentNet, LocationModel, LocationNet, OracleLocation, PriorContent,
    UniformLocation,
};
use jumpdiff::reverse::{synthesize as core_synth, AnalyticScore, SamplerConfig};
use jumpdiff::rng::{stream, streams};
use jumpdiff::{DiffusionTime, NoiseSchedule, DEFAULT_T_MIN};
use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: jumpdiff::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

trait OrPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrPy<T> for jumpdiff::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn time(t: f64) -> PyResult<DiffusionTime> {
    DiffusionTime::new(t).py()
}

/// A spectrogram: `frames` columns of `bins` values each.
#[pyclass(module = "jumpdiff_py", frozen)]
struct Spectrogram(jumpdiff::Spectrogram);

#[pymethods]
impl Spectrogram {
    /// Build from a list of frames, each a list of `bins` floats.
    #[new]
    fn new(frames: Vec<Vec<f32>>) -> PyResult<Self> {
        let bins = frames.first().map_or(0, Vec::len);
        jumpdiff::Spectrogram::from_columns(bins, &frames)
            .py()
            .map(Self)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        jumpdiff::io::load_jdsp(path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        jumpdiff::io::save_jdsp(path, &self.0).py()
    }

    #[getter]
    fn bins(&self) -> usize {
        self.0.bins()
    }

    #[getter]
    fn frames(&self) -> usize {
        self.0.frames()
    }

    fn to_frames(&self) -> Vec<Vec<f32>> {
        self.0.columns().map(<[f32]>::to_vec).collect()
    }

    fn __len__(&self) -> usize {
        self.0.frames()
    }

    fn __repr__(&self) -> String {
        format!(
            "Spectrogram(bins={}, frames={})",
            self.0.bins(),
            self.0.frames()
        )
    }
}

/// Linear VP noise schedule.
#[pyclass(module = "jumpdiff_py", name = "NoiseSchedule", frozen)]
struct PyNoiseSchedule(NoiseSchedule);

#[pymethods]
impl PyNoiseSchedule {
    #[new]
    #[pyo3(signature = (beta_0 = 0.05, beta_1 = 20.0))]
    fn new(beta_0: f64, beta_1: f64) -> PyResult<Self> {
        NoiseSchedule::new(beta_0, beta_1).py().map(Self)
    }

    fn cum_beta(&self, t: f64) -> PyResult<f64> {
        Ok(self.0.cum_beta(time(t)?))
    }

    /// `(retain, prior, sigma)` of the forward kernel at `t`.
    fn coefficients(&self, t: f64) -> PyResult<(f64, f64, f64)> {
        let c = self.0.vp_coefficients(time(t)?);
        Ok((c.retain, c.prior, c.sigma))
    }
}

/// A synthetic corpus with known alignments.
#[pyclass(module = "jumpdiff_py", frozen)]
struct Corpus(CoreCorpus);

impl Corpus {
    fn utt(&self, index: usize) -> PyResult<&Utterance> {
        self.0
            .utterances
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("utterance {index} out of range")))
    }
}

#[pymethods]
impl Corpus {
    /// Generate a corpus; `config` is an optional JSON object string whose
    /// keys override the defaults.
    #[staticmethod]
    #[pyo3(signature = (seed, num_utterances = None, config = None))]
    fn generate(seed: u64, num_utterances: Option<usize>, config: Option<&str>) -> PyResult<Self> {
        let mut cfg: CorpusConfig = match config {
            Some(text) => {
                serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?
            }
            None => CorpusConfig::default(),
        };
        if let Some(n) = num_utterances {
            cfg.num_utterances = n;
        }
        gen(&cfg, seed, &mut stream(seed, streams::CORPUS))
            .py()
            .map(Self)
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        CoreCorpus::load(&dir).py().map(Self)
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.0.save(&dir).py()
    }

    fn __len__(&self) -> usize {
        self.0.utterances.len()
    }

    #[getter]
    fn silence_fraction(&self) -> f64 {
        self.0.silence_fraction()
    }

    #[getter]
    fn silence_threshold(&self) -> PyResult<f64> {
        eval::default_silence_threshold(self.0.utterances.iter().map(|u| &u.x0)).py()
    }

    /// `{id, phones, durations, x0, mu}` of one utterance.
    fn utterance<'py>(&self, py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyDict>> {
        let u = self.utt(index)?;
        let d = PyDict::new(py);
        d.set_item("id", u.id)?;
        d.set_item("phones", u.phones.clone())?;
        d.set_item("durations", u.durations.clone())?;
        d.set_item("x0", Spectrogram(u.x0.clone()))?;
        d.set_item("mu", Spectrogram(u.mu.clone()))?;
        Ok(d)
    }

    /// Forward-corrupt one utterance to time `t`: `{x_t, kept, s_target}`.
    #[pyo3(signature = (index, t, seed, t_min = DEFAULT_T_MIN))]
    fn corrupt<'py>(
        &self,
        py: Python<'py>,
        index: usize,
        t: f64,
        seed: u64,
        t_min: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let u = self.utt(index)?;
        let mut rng = stream(seed, &format!("{}/{}", streams::CORRUPT, u.id));
        let s = core_forward(
            &u.x0,
            &u.mu,
            &u.alignment,
            time(t)?,
            &NoiseSchedule::default(),
            t_min,
            &mut rng,
        )
        .py()?;
        let d = PyDict::new(py);
        d.set_item("s_target", s.target.as_ref().map(|j| j.s_target))?;
        d.set_item("kept", s.kept)?;
        d.set_item("x_t", Spectrogram(s.x_t))?;
        Ok(d)
    }

    /// Synthesize one utterance from its phones: `{x, durations, lengths}`.
    ///
    /// `location` is "oracle", "uniform" or "model" (needs `model_dir`);
    /// `content` is "prior" or "model".
    #[pyo3(signature = (
        index, seed, mode = "tdd", solver = "ode", steps = 100, allocation = "sample",
        location = "oracle", content = "prior", speed = 1.0, model_dir = None
    ))]
    #[allow(clippy::too_many_arguments)]
    fn synthesize<'py>(
        &self,
        py: Python<'py>,
        index: usize,
        seed: u64,
        mode: &str,
        solver: &str,
        steps: usize,
        allocation: &str,
        location: &str,
        content: &str,
        speed: f64,
        model_dir: Option<PathBuf>,
    ) -> PyResult<Bound<'py, PyDict>> {
        let u = self.utt(index)?;
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(PyValueError::new_err("speed must be positive"));
        }
        let cfg = SamplerConfig {
            mode: mode.parse().py()?,
            solver: solver.parse().py()?,
            allocation: allocation.parse().py()?,
            steps,
            ..SamplerConfig::default()
        };
        let target = ((u.num_frames() as f64 / speed).round() as usize).max(u.phones.len());
        let checkpoint = |name: &str| -> PyResult<jumpdiff::io::Checkpoint> {
            let dir = model_dir.as_ref().ok_or_else(|| {
                PyValueError::new_err("model_dir is required for trained predictors")
            })?;
            let mut f = std::fs::File::open(dir.join(name))
                .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            read_jdmp(&mut f).py()
        };
        let oracle = OracleLocation::from_durations(u.durations.clone());
        let net;
        let loc: &dyn LocationModel = match location {
            "oracle" => &oracle,
            "uniform" => &UniformLocation,
            "model" => {
                net = LocationNet::from_checkpoint(&checkpoint("location.jdmp")?).py()?;
                &net
            }
            other => return Err(PyValueError::new_err(format!("unknown location '{other}'"))),
        };
        let cnet;
        let cont: &dyn ContentModel = match content {
            "prior" => &PriorContent,
            "model" => {
                cnet = ContentNet::from_checkpoint(&checkpoint("content.jdmp")?).py()?;
                &cnet
            }
            other => return Err(PyValueError::new_err(format!("unknown content '{other}'"))),
        };
        let score = AnalyticScore::new(self.0.inventory.frame_variance, cfg.schedule).py()?;
        let means = self.0.inventory.phone_means(&u.phones).py()?;
        let mut rng = stream(seed, &format!("{}/{}", streams::SYNTH, u.id));
        let out = core_synth(&cfg, &means, target, loc, cont, &score, &mut rng).py()?;
        let d = PyDict::new(py);
        d.set_item(
            "lengths",
            out.trace.grid.iter().map(|s| s.len).collect::<Vec<_>>(),
        )?;
        d.set_item("durations", out.durations)?;
        d.set_item("x", Spectrogram(out.x))?;
        Ok(d)
    }
}

/// Persistent length at time `t` for `l0` frames and `p_size` protected ones.
#[pyfunction]
#[pyo3(signature = (l0, p_size, t, t_min = DEFAULT_T_MIN))]
fn schedule_length(l0: usize, p_size: usize, t: f64, t_min: f64) -> PyResult<usize> {
    jumpdiff::schedule_length(l0, p_size, time(t)?, t_min).py()
}

/// DTW alignment of `x` against `y`: `{path, cost, r2, max_vertical_run}`.
#[pyfunction]
fn dtw<'py>(py: Python<'py>, x: &Spectrogram, y: &Spectrogram) -> PyResult<Bound<'py, PyDict>> {
    let r = eval::dtw_path(&x.0, &y.0).py()?;
    let d = PyDict::new(py);
    d.set_item("r2", eval::path_linearity(&r).py()?)?;
    d.set_item("max_vertical_run", eval::max_vertical_run(&r))?;
    d.set_item("cost", r.cost)?;
    d.set_item("path", r.path)?;
    Ok(d)
}

/// Fraction of frames with mean absolute value below `threshold`.
#[pyfunction]
fn silence_ratio(x: &Spectrogram, threshold: f64) -> f64 {
    eval::silence_ratio(&x.0, threshold).ratio
}

#[pyfunction]
fn wasserstein1(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    eval::wasserstein1(&a, &b).py()
}

#[pymodule]
fn jumpdiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Spectrogram>()?;
    m.add_class::<PyNoiseSchedule>()?;
    m.add_class::<Corpus>()?;
    m.add_function(wrap_pyfunction!(schedule_length, m)?)?;
    m.add_function(wrap_pyfunction!(dtw, m)?)?;
    m.add_function(wrap_pyfunction!(silence_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein1, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn module_exposes_core_operations() {
        Python::initialize();
        Python::attach(|py| {
            let m = pyo3::wrap_pymodule!(jumpdiff_py)(py);
            let m = m.bind(py);
            let len: usize = m
                .getattr("schedule_length")
                .unwrap()
                .call1((100, 20, 0.55))
                .unwrap()
                .extract()
                .unwrap();
            assert_eq!(len, 60);
            let err = m
                .getattr("schedule_length")
                .unwrap()
                .call1((10, 20, 0.5))
                .unwrap_err();
            assert!(err.is_instance_of::<PyValueError>(py));
            let corpus = m
                .getattr("Corpus")
                .unwrap()
                .call_method1("generate", (0u64, 2usize))
                .unwrap();
            assert_eq!(corpus.len().unwrap(), 2);
        });
    }
}
