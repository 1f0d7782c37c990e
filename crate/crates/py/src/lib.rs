//! Python bindings: scenarios, layouts, the inner robust solve, the swarm
//! search and the experiment drivers.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mafd_core::channel::{AntennaLayout, ChannelSet};
use mafd_core::config::{ConfigFile, RunConfig};
use mafd_core::experiments::{self, ExperimentKind, ExperimentSpec};
use mafd_core::pso::{self, SwarmConfig};
use mafd_core::robust::{self, InnerOptions, InnerProblemData};
use mafd_core::scenario::{self, SystemConfig};
use mafd_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Schema { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Random problem instance: angles, gains, SI and CCI coefficients.
#[pyclass(module = "ma_fd_power", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl Scenario {
    /// Desk-scale instance (M = N = 8, J = 3, K = 2).
    #[staticmethod]
    #[pyo3(signature = (seed = 1))]
    fn desk(seed: u64) -> PyResult<Self> {
        let sys = SystemConfig { rng_seed: seed, ..SystemConfig::desk() };
        Ok(Scenario { inner: scenario::Scenario::generate(&sys).map_err(py_err)? })
    }

    /// Full-scale instance (M = N = 16, J = 6, K = 2).
    #[staticmethod]
    #[pyo3(signature = (seed = 1))]
    fn full_scale(seed: u64) -> PyResult<Self> {
        let sys = SystemConfig { rng_seed: seed, ..SystemConfig::full_scale() };
        Ok(Scenario { inner: scenario::Scenario::generate(&sys).map_err(py_err)? })
    }

    /// Scenario an experiment uses for root seed `seed` under a TOML config.
    #[staticmethod]
    #[pyo3(signature = (seed, config = None, full_scale = false))]
    fn for_seed(seed: u64, config: Option<PathBuf>, full_scale: bool) -> PyResult<Self> {
        let cfg = load_config(config, full_scale)?;
        Ok(Scenario { inner: experiments::instance(&cfg, seed).map_err(py_err)?.scenario })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Scenario { inner: scenario::Scenario::load(path).map_err(py_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn with_si_loss(&self, rho: f64) -> Self {
        Scenario { inner: self.inner.with_si_loss(rho) }
    }

    fn with_weights(&self, weights: [f64; 2]) -> Self {
        Scenario { inner: self.inner.with_weights(weights) }
    }

    fn with_references(&self, references: [f64; 2]) -> Self {
        Scenario { inner: self.inner.with_references(references) }
    }

    /// Same instance with square regions of `wavelengths` wavelengths.
    fn with_region(&self, wavelengths: f64) -> Self {
        let mut s = self.inner.clone();
        s.config.region_size_tx = wavelengths * s.config.wavelength;
        s.config.region_size_rx = wavelengths * s.config.wavelength;
        Scenario { inner: s }
    }

    #[getter]
    fn num_tx(&self) -> usize {
        self.inner.config.num_tx_antennas
    }

    #[getter]
    fn num_rx(&self) -> usize {
        self.inner.config.num_rx_antennas
    }

    #[getter]
    fn num_ul(&self) -> usize {
        self.inner.config.num_ul_uts
    }

    #[getter]
    fn num_dl(&self) -> usize {
        self.inner.config.num_dl_uts
    }

    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.config.wavelength
    }

    #[getter]
    fn region_size(&self) -> (f64, f64) {
        (self.inner.config.region_size_tx, self.inner.config.region_size_rx)
    }

    #[getter]
    fn min_spacing(&self) -> f64 {
        self.inner.config.min_spacing
    }

    #[getter]
    fn si_loss(&self) -> f64 {
        self.inner.config.si_loss
    }

    #[getter]
    fn weights(&self) -> [f64; 2] {
        self.inner.config.weights
    }

    #[getter]
    fn references(&self) -> [f64; 2] {
        self.inner.config.references
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.config.rng_seed
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!(
            "Scenario(M={}, N={}, J={}, K={}, seed={})",
            c.num_tx_antennas, c.num_rx_antennas, c.num_ul_uts, c.num_dl_uts, c.rng_seed
        )
    }
}

/// Transmit and receive antenna positions in metres, centred regions.
#[pyclass(module = "ma_fd_power", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Layout {
    inner: AntennaLayout,
}

#[pymethods]
impl Layout {
    #[new]
    fn new(tx: Vec<[f64; 2]>, rx: Vec<[f64; 2]>) -> Self {
        Layout { inner: AntennaLayout::new(tx, rx) }
    }

    /// Centred uniform planar arrays with the given pitch.
    #[staticmethod]
    fn upa(num_tx: usize, num_rx: usize, pitch: f64) -> Self {
        Layout { inner: experiments::upa_layout(num_tx, num_rx, pitch) }
    }

    /// Half-wavelength arrays matching a scenario's antenna counts.
    #[staticmethod]
    fn fpa(scenario: &Scenario) -> Self {
        let c = &scenario.inner.config;
        Layout::upa(c.num_tx_antennas, c.num_rx_antennas, c.wavelength / 2.0)
    }

    #[getter]
    fn tx(&self) -> Vec<[f64; 2]> {
        self.inner.tx.clone()
    }

    #[getter]
    fn rx(&self) -> Vec<[f64; 2]> {
        self.inner.rx.clone()
    }

    fn min_spacing(&self) -> (f64, f64) {
        (self.inner.min_tx_spacing(), self.inner.min_rx_spacing())
    }

    fn within_regions(&self, size_tx: f64, size_rx: f64) -> bool {
        self.inner.within_regions(size_tx, size_rx)
    }

    /// Antennas violating the minimum spacing, summed over both regions.
    fn penalty(&self, min_spacing: f64) -> usize {
        pso::penalty_count(&self.inner, min_spacing, pso::PenaltyMode::Antennas)
    }

    fn __repr__(&self) -> String {
        format!("Layout(tx={}, rx={})", self.inner.tx.len(), self.inner.rx.len())
    }
}

/// Result of one inner robust solve.
#[pyclass(module = "ma_fd_power", frozen, get_all)]
struct InnerSolution {
    status: String,
    p: Vec<f64>,
    total_ul: f64,
    total_dl: f64,
    tau: f64,
    rank_ratio: Vec<f64>,
    beamformers: Vec<Vec<Complex64>>,
    iterations: u32,
    solve_time: f64,
}

impl From<robust::InnerSolution> for InnerSolution {
    fn from(s: robust::InnerSolution) -> Self {
        InnerSolution {
            status: s.status.to_string(),
            p: s.p,
            total_ul: s.total_ul,
            total_dl: s.total_dl,
            tau: s.tau,
            rank_ratio: s.rank_ratio,
            beamformers: s.beamformers.iter().map(|b| b.iter().copied().collect()).collect(),
            iterations: s.iterations,
            solve_time: s.solve_time,
        }
    }
}

#[pymethods]
impl InnerSolution {
    fn is_optimal(&self) -> bool {
        self.status == "optimal"
    }

    fn __repr__(&self) -> String {
        format!("InnerSolution(status={}, total_ul={:e}, total_dl={:e})", self.status, self.total_ul, self.total_dl)
    }
}

fn options(tol: Option<f64>, augmentation: Option<f64>) -> InnerOptions {
    let d = InnerOptions::default();
    InnerOptions { tol: tol.unwrap_or(d.tol), augmentation: augmentation.unwrap_or(d.augmentation), ..d }
}

/// Channels at a layout: (SI matrix as rows, UL vectors, DL vectors).
#[pyfunction]
#[allow(clippy::type_complexity)]
fn channels(scenario: &Scenario, layout: &Layout) -> (Vec<Vec<Complex64>>, Vec<Vec<Complex64>>, Vec<Vec<Complex64>>) {
    let set = ChannelSet::assemble(&layout.inner, &scenario.inner);
    let si = set.si.row_iter().map(|r| r.iter().copied().collect()).collect();
    let vecs = |v: &[mafd_core::linalg::CVector]| v.iter().map(|x| x.iter().copied().collect()).collect();
    (si, vecs(&set.ul), vecs(&set.dl))
}

/// Minimum-power robust beamforming at a fixed layout.
#[pyfunction]
#[pyo3(signature = (scenario, layout, tol = None, augmentation = None))]
fn solve_inner(
    py: Python<'_>,
    scenario: &Scenario,
    layout: &Layout,
    tol: Option<f64>,
    augmentation: Option<f64>,
) -> PyResult<InnerSolution> {
    let opts = options(tol, augmentation);
    let (s, l) = (scenario.inner.clone(), layout.inner.clone());
    let sol = py
        .detach(move || InnerProblemData::new(&s, &l).and_then(|d| robust::solve_inner(&d, &opts)))
        .map_err(py_err)?;
    Ok(sol.into())
}

/// Swarm search over antenna positions. Returns (layout, solution, gbest fitness trace).
#[pyfunction]
#[pyo3(signature = (scenario, particles = 20, iterations = 60, seed = 1, penalty = 1.0))]
fn optimize_layout(
    py: Python<'_>,
    scenario: &Scenario,
    particles: usize,
    iterations: usize,
    seed: u64,
    penalty: f64,
) -> PyResult<(Layout, InnerSolution, Vec<f64>)> {
    let cfg = SwarmConfig { particles, iterations, rng_seed: seed, penalty, ..SwarmConfig::default() };
    let s = scenario.inner.clone();
    let r = py.detach(move || pso::optimize_layout(&s, &cfg, &InnerOptions::default())).map_err(py_err)?;
    Ok((Layout { inner: r.layout }, r.solution.into(), r.trace.fitness))
}

fn load_config(path: Option<PathBuf>, full_scale: bool) -> PyResult<RunConfig> {
    let file = match path {
        Some(p) => ConfigFile::load(p).map_err(py_err)?,
        None => ConfigFile::default(),
    };
    file.resolve(full_scale).map_err(py_err)
}

/// Runs one experiment and writes its files to `out`. Returns the list of files written.
#[pyfunction]
#[pyo3(signature = (kind, seeds, out, config = None, full_scale = false, audit = false))]
fn run_experiment(
    py: Python<'_>,
    kind: &str,
    seeds: &str,
    out: PathBuf,
    config: Option<PathBuf>,
    full_scale: bool,
    audit: bool,
) -> PyResult<Vec<PathBuf>> {
    let kind = match kind.replace('-', "_").as_str() {
        "convergence" => ExperimentKind::Convergence,
        "tradeoff" => ExperimentKind::Tradeoff,
        "si_sweep" => ExperimentKind::SiSweep,
        "single" => ExperimentKind::Single,
        other => return Err(PyValueError::new_err(format!("unknown experiment {other:?}"))),
    };
    let config = load_config(config, full_scale)?;
    let seeds = experiments::parse_seeds(seeds).map_err(py_err)?;
    let spec = ExperimentSpec { kind, config, seeds, out_dir: out, audit };
    let outcome = py.detach(move || experiments::run_experiment(&spec)).map_err(py_err)?;
    Ok(outcome.files)
}

#[pymodule]
fn ma_fd_power(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Layout>()?;
    m.add_class::<InnerSolution>()?;
    m.add_function(wrap_pyfunction!(channels, m)?)?;
    m.add_function(wrap_pyfunction!(solve_inner, m)?)?;
    m.add_function(wrap_pyfunction!(optimize_layout, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
