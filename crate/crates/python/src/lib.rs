//! Python bindings: configs, simulations, low-rank matrices and the field
//! solver. Arrays cross the boundary as nested lists.

use lomac::field::solve_poisson;
use lomac::io::{config_from_entries, parse_override, snapshot_read, snapshot_write, Snapshot};
use lomac::presets::forced_errors;
use lomac::{LomacError, LowRankMatrix, Preset, Simulation, SolverConfig, SpatialGrid};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: LomacError) -> PyErr {
    match e {
        LomacError::Io { .. } | LomacError::Snapshot(_) => PyIOError::new_err(e.to_string()),
        LomacError::RankExplosion { .. } | LomacError::CflViolation { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "SolverConfig", module = "pylomac", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SolverConfig,
}

#[pymethods]
impl PyConfig {
    /// `SolverConfig("weak_landau_1d", nx=32, eps=1e-6, ...)`; keyword
    /// names are the config-file keys.
    #[new]
    #[pyo3(signature = (preset, **overrides))]
    fn new(preset: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut entries = vec![parse_override(&format!("preset.name={preset}")).map_err(err)?];
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                let key: String = k.extract()?;
                let value = v.str()?.to_string();
                let value = match value.as_str() {
                    "True" => "true".to_string(),
                    "False" => "false".to_string(),
                    _ => value,
                };
                entries.push(parse_override(&format!("{key}={value}")).map_err(err)?);
            }
        }
        Ok(Self {
            inner: config_from_entries(&entries).map_err(err)?,
        })
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        Preset::ALL.map(|p| p.name()).to_vec()
    }

    #[getter]
    fn preset(&self) -> &'static str {
        self.inner.preset.name()
    }
    #[getter]
    fn variant(&self) -> &'static str {
        self.inner.variant.name()
    }
    #[setter]
    fn set_variant(&mut self, v: &str) -> PyResult<()> {
        self.inner.variant = v.parse().map_err(err)?;
        Ok(())
    }
    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx
    }
    #[setter]
    fn set_nx(&mut self, n: usize) {
        self.inner.nx = n;
    }
    #[getter]
    fn nv(&self) -> usize {
        self.inner.nv
    }
    #[setter]
    fn set_nv(&mut self, n: usize) {
        self.inner.nv = n;
    }
    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }
    #[setter]
    fn set_eps(&mut self, eps: f64) {
        self.inner.eps = eps;
    }
    #[getter]
    fn t_end(&self) -> f64 {
        self.inner.t_end
    }
    #[setter]
    fn set_t_end(&mut self, t: f64) {
        self.inner.t_end = t;
    }
    #[getter]
    fn dt(&self) -> Option<f64> {
        self.inner.dt
    }
    #[setter]
    fn set_dt(&mut self, dt: Option<f64>) {
        self.inner.dt = dt;
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "SolverConfig(preset={}, variant={}, nx={}, nv={}, eps={:e}, t_end={})",
            c.preset, c.variant, c.nx, c.nv, c.eps, c.t_end
        )
    }
}

#[pyclass(name = "LowRankMatrix", module = "pylomac", from_py_object)]
#[derive(Clone)]
struct PyLowRank {
    inner: LowRankMatrix,
}

#[pymethods]
impl PyLowRank {
    /// Builds `sum_l x_l v_l^T` from lists of factor columns.
    #[new]
    fn new(x: Vec<Vec<f64>>, v: Vec<Vec<f64>>, hx: f64, hv: f64) -> PyResult<Self> {
        if x.len() != v.len() {
            return Err(PyValueError::new_err(
                "x and v need the same number of terms",
            ));
        }
        let terms: Vec<_> = x.into_iter().zip(v).collect();
        Ok(Self {
            inner: LowRankMatrix::from_terms(&terms, hx, hv).map_err(err)?,
        })
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank()
    }
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.nx(), self.inner.nv())
    }
    fn norm(&self) -> f64 {
        self.inner.norm()
    }
    fn truncate(&self, eps: f64) -> Self {
        Self {
            inner: self.inner.truncate(eps),
        }
    }
    fn singular_values(&self) -> Vec<f64> {
        self.inner.recompress().coeffs().iter().copied().collect()
    }
    fn dense(&self) -> Vec<Vec<f64>> {
        let d = self.inner.dense();
        (0..d.nrows())
            .map(|i| d.row(i).iter().copied().collect())
            .collect()
    }
    fn __repr__(&self) -> String {
        format!(
            "LowRankMatrix(shape=({}, {}), rank={})",
            self.inner.nx(),
            self.inner.nv(),
            self.inner.rank()
        )
    }
}

#[pyclass(name = "Simulation", module = "pylomac", unsendable)]
struct PySimulation {
    inner: Simulation,
}

fn row_dict<'py>(py: Python<'py>, r: &lomac::DiagnosticsRow) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", r.t)?;
    d.set_item("ranks", r.ranks.clone())?;
    d.set_item("mass", r.mass)?;
    d.set_item("momentum", r.momentum.clone())?;
    d.set_item("energy", r.energy)?;
    d.set_item("electric_energy", r.electric_energy)?;
    d.set_item("wall_ms", r.wall_ms)?;
    Ok(d)
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        Ok(Self {
            inner: Simulation::new(config.inner.clone()).map_err(err)?,
        })
    }

    #[staticmethod]
    fn resume(path: &str, config: &PyConfig) -> PyResult<Self> {
        let snap = snapshot_read(path).map_err(err)?;
        Ok(Self {
            inner: snap.resume(config.inner.clone()).map_err(err)?,
        })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time()
    }
    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt()
    }
    #[getter]
    fn step_index(&self) -> usize {
        self.inner.step_index()
    }
    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps()
    }
    #[getter]
    fn finished(&self) -> bool {
        self.inner.is_finished()
    }
    #[getter]
    fn ranks(&self) -> Vec<usize> {
        self.inner.current().f.ranks()
    }

    /// Advances `n` steps, stopping early at the end time.
    #[pyo3(signature = (n = 1))]
    fn step(&mut self, py: Python<'_>, n: usize) -> PyResult<()> {
        for _ in 0..n {
            if self.inner.is_finished() {
                break;
            }
            self.inner.step().map_err(err)?;
            py.check_signals()?;
        }
        Ok(())
    }

    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        row_dict(py, &self.inner.diagnostics().map_err(err)?)
    }

    /// Runs to the end time and returns one dict per recorded output.
    fn run<'py>(&mut self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let series = self.inner.run_with(|_| Ok(())).map_err(err)?;
        series.rows.iter().map(|r| row_dict(py, r)).collect()
    }

    /// The 1D1V solution as a low-rank matrix; `None` for 2D2V runs.
    fn distribution(&self) -> Option<PyLowRank> {
        self.inner
            .current()
            .f
            .as_1d()
            .map(|f| PyLowRank { inner: f.clone() })
    }

    /// `(L_inf, L2)` errors against the exact forced solution.
    fn forced_errors(&self) -> PyResult<(f64, f64)> {
        if self.inner.config().preset != Preset::Forced {
            return Err(PyValueError::new_err("not a forced-problem run"));
        }
        let f = self
            .inner
            .current()
            .f
            .as_1d()
            .expect("forced runs are 1D1V");
        Ok(forced_errors(
            f,
            self.inner.spatial_grids()[0],
            self.inner.velocity_grid(),
            self.inner.time(),
        ))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        snapshot_write(&Snapshot::from_simulation(&self.inner), path).map_err(err)
    }
}

/// Periodic field `E = -dphi/dx` for a density sampled on `[x_min, x_min + length)`.
#[pyfunction]
#[pyo3(signature = (rho, length, x_min = 0.0, sign = 1.0))]
fn poisson_field(rho: Vec<f64>, length: f64, x_min: f64, sign: f64) -> PyResult<Vec<f64>> {
    let grid = SpatialGrid::periodic(rho.len(), x_min, x_min + length).map_err(err)?;
    Ok(solve_poisson(&rho, &grid, sign).map_err(err)?.e)
}

/// Runs a config to completion; returns the diagnostics rows.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let series = lomac::run(&config.inner).map_err(err)?;
    series.rows.iter().map(|r| row_dict(py, r)).collect()
}

#[pymodule]
fn pylomac(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyLowRank>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(poisson_field, m)?)?;
    Ok(())
}
