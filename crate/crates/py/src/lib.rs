//! Python bindings for `isq-core`.

use isq_core::analytics::MgParams;
use isq_core::bounds::convergence_constant as core_convergence_constant;
use isq_core::coupling::{couple as core_couple, dominate as core_dominate, CoupleOptions};
use isq_core::hazard::{exponential_table, sample_first_event, HazardClock, MaximalCoupling, TableOptions};
use isq_core::simulator::{detect_cycles, simulate as core_simulate, Trajectory};
use isq_core::{Envelope, Error, Family, FullState, Intensity, Streams};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    if e.is_numeric() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

#[pyclass(name = "Envelope", module = "isq", frozen)]
struct PyEnvelope {
    inner: Envelope,
}

#[pymethods]
impl PyEnvelope {
    #[new]
    fn new(k: f64, lambda0: f64, lambda_max: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Envelope::new(k, lambda0, lambda_max).map_err(to_py)?,
        })
    }

    #[getter]
    fn k(&self) -> f64 {
        self.inner.k
    }

    #[getter]
    fn lambda0(&self) -> f64 {
        self.inner.lambda0
    }

    #[getter]
    fn lambda_max(&self) -> f64 {
        self.inner.lambda_max
    }

    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    fn __repr__(&self) -> String {
        format!(
            "Envelope(k={}, lambda0={}, lambda_max={})",
            self.inner.k, self.inner.lambda0, self.inner.lambda_max
        )
    }
}

#[pyclass(name = "Family", module = "isq", frozen)]
struct PyFamily {
    inner: Family,
}

#[pymethods]
impl PyFamily {
    #[staticmethod]
    fn mg_infinity(lambda_: f64, k: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Family::mg_infinity(lambda_, k).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn mm_infinity(lambda_: f64, mu: f64, k: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Family::mm_infinity(lambda_, mu, k).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn state_modulated(lambda0: f64, lambda_max: f64, k: f64, a: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Family::state_modulated(lambda0, lambda_max, k, a).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.family_name()
    }

    fn params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, v) in self.inner.params() {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    fn envelope(&self) -> PyEnvelope {
        PyEnvelope {
            inner: self.inner.envelope(),
        }
    }

    fn arrival_rate(&self, state: PyRef<'_, PyFullState>) -> f64 {
        self.inner.arrival_rate(&state.inner)
    }

    /// Hazard of customer `i` (0-based).
    fn service_rate(&self, state: PyRef<'_, PyFullState>, i: usize) -> PyResult<f64> {
        if i >= state.inner.n() {
            return Err(to_py(Error::IndexOutOfRange { index: i, n: state.inner.n() }));
        }
        Ok(self.inner.service_rate(&state.inner, i))
    }

    fn __repr__(&self) -> String {
        let p: Vec<String> = self.inner.params().iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("Family.{}({})", self.inner.family_name(), p.join(", "))
    }
}

#[pyclass(name = "FullState", module = "isq", frozen)]
struct PyFullState {
    inner: FullState,
}

#[pymethods]
impl PyFullState {
    #[new]
    #[pyo3(signature = (x0=0.0, ages=Vec::new()))]
    fn new(x0: f64, ages: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: FullState::new(x0, ages).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn regeneration() -> Self {
        Self {
            inner: FullState::regeneration(),
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn x0(&self) -> f64 {
        self.inner.x0()
    }

    #[getter]
    fn ages(&self) -> Vec<f64> {
        self.inner.ages().to_vec()
    }

    fn is_idle(&self) -> bool {
        self.inner.is_idle()
    }

    fn shift(&self, u: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.shift(u).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("FullState({})", self.inner)
    }
}

#[pyclass(name = "Trajectory", module = "isq", frozen)]
struct PyTrajectory {
    inner: Trajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.events.iter().map(|e| e.time).collect()
    }

    #[getter]
    fn kinds(&self) -> Vec<&'static str> {
        self.inner.events.iter().map(|e| e.kind.as_str()).collect()
    }

    #[getter]
    fn counts(&self) -> Vec<usize> {
        self.inner.events.iter().map(|e| e.state_after.n()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.events.len()
    }

    fn state_at(&self, t: f64) -> PyResult<PyFullState> {
        Ok(PyFullState {
            inner: self.inner.state_at(t).map_err(to_py)?,
        })
    }

    fn busy_periods(&self) -> Vec<f64> {
        detect_cycles(&self.inner).busy_periods()
    }

    fn idle_periods(&self) -> Vec<f64> {
        detect_cycles(&self.inner).idle_periods()
    }

    fn regeneration_times(&self) -> Vec<f64> {
        detect_cycles(&self.inner).regeneration_times()
    }
}

/// One path of `family` on `[0, horizon]` from `initial` (default `(0,0)`),
/// using substream `(seed, "python", index)`.
#[pyfunction]
#[pyo3(signature = (family, horizon, seed, initial=None, index=0))]
fn simulate(
    family: PyRef<'_, PyFamily>,
    horizon: f64,
    seed: u64,
    initial: Option<PyRef<'_, PyFullState>>,
    index: u64,
) -> PyResult<PyTrajectory> {
    let start = initial.map(|s| s.inner.clone()).unwrap_or_else(FullState::origin);
    let mut rng = Streams::new(seed).stream("python", index);
    Ok(PyTrajectory {
        inner: core_simulate(&family.inner, &start, horizon, &mut rng).map_err(to_py)?,
    })
}

#[pyclass(name = "MgAnalytics", module = "isq", frozen)]
struct PyMgAnalytics {
    inner: MgParams,
}

#[pymethods]
impl PyMgAnalytics {
    #[new]
    fn new(lambda_: f64, k: f64) -> PyResult<Self> {
        Ok(Self {
            inner: MgParams::new(lambda_, k).map_err(to_py)?,
        })
    }

    fn rho(&self) -> f64 {
        self.inner.rho()
    }

    fn g_integral(&self, t: f64) -> PyResult<f64> {
        self.inner.g_integral(t).map_err(to_py)
    }

    fn occupancy_pk(&self, t: f64, k: u64) -> PyResult<f64> {
        self.inner.occupancy_pk(t, k).map_err(to_py)
    }

    fn busy_mean(&self) -> f64 {
        self.inner.busy_mean()
    }

    fn busy_second_moment(&self) -> PyResult<f64> {
        self.inner.busy_second_moment().map_err(to_py)
    }

    fn laplace_busy(&self, s: f64) -> PyResult<f64> {
        self.inner.laplace_busy(s).map_err(to_py)
    }

    fn busy_moment_bound(&self, k: f64) -> PyResult<f64> {
        self.inner.busy_moment_bound(k).map_err(to_py)
    }
}

/// `C1` and every intermediate constant as a dict.
#[pyfunction]
#[pyo3(signature = (envelope, r, varpi=None))]
fn convergence_constant<'py>(
    py: Python<'py>,
    envelope: PyRef<'_, PyEnvelope>,
    r: f64,
    varpi: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let b = core_convergence_constant(&envelope.inner, r, varpi).map_err(to_py)?;
    let d = PyDict::new(py);
    for (k, v) in [
        ("k", b.k),
        ("lambda0", b.lambda0),
        ("lambda_max", b.lambda_max),
        ("r", b.r),
        ("m_r", b.m_r),
        ("m_r1", b.m_r1),
        ("rho", b.rho),
        ("varrho", b.varrho),
        ("z_r", b.z_r),
        ("z_r1", b.z_r1),
        ("h_r", b.h_r),
        ("h_r1", b.h_r1),
        ("chi_r", b.chi_r),
        ("chi_r1", b.chi_r1),
        ("chi_mean_lb", b.chi_mean_lb),
        ("varpi", b.varpi),
        ("a_r", b.a_r),
        ("b_r", b.b_r),
        ("d_r", b.d_r),
        ("stationary_residual", b.stationary_residual),
        ("c1", b.c1),
    ] {
        d.set_item(k, v)?;
    }
    let curve: Vec<(f64, f64)> = b.curve.iter().map(|p| (p.t, p.bound)).collect();
    d.set_item("curve", curve)?;
    Ok(d)
}

/// Runs `family` against its comparison system; returns the summary.
#[pyfunction]
#[pyo3(signature = (family, horizon, seed, index=0))]
fn dominate<'py>(
    py: Python<'py>,
    family: PyRef<'_, PyFamily>,
    horizon: f64,
    seed: u64,
    index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut rng = Streams::new(seed).stream("python-dominate", index);
    let t = core_dominate(&family.inner, horizon, &mut rng).map_err(to_py)?;
    let (max_n, max_n_circ) = t.max_counts();
    let d = PyDict::new(py);
    d.set_item("violations", t.violations)?;
    d.set_item("max_n", max_n)?;
    d.set_item("max_n_circ", max_n_circ)?;
    d.set_item("shared_arrivals", t.shared_arrivals)?;
    d.set_item("thinned_arrivals", t.thinned_arrivals)?;
    d.set_item("times", t.times)?;
    d.set_item("n_pairs", t.n_pairs)?;
    Ok(d)
}

/// Couples a copy started at `(0,0)` with one started at `start`
/// (default `(1,0;0)`).
#[pyfunction]
#[pyo3(signature = (family, horizon, seed, start=None, index=0))]
fn couple<'py>(
    py: Python<'py>,
    family: PyRef<'_, PyFamily>,
    horizon: f64,
    seed: u64,
    start: Option<PyRef<'_, PyFullState>>,
    index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let start = start.map(|s| s.inner.clone()).unwrap_or_else(FullState::regeneration);
    let mut opts = CoupleOptions::new(horizon);
    opts.follow_after_tau = false;
    let mut rng = Streams::new(seed).stream("python-couple", index);
    let t = core_couple(&family.inner, &start, &opts, &mut rng).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("tau", t.tau)?;
    d.set_item("attempts", t.attempts.iter().map(|a| (a.time, a.kappa, a.coupled)).collect::<Vec<_>>())?;
    d.set_item("theta_marks", t.theta_marks.iter().map(|m| (m.time, m.y_idle)).collect::<Vec<_>>())?;
    Ok(d)
}

/// `n` draws from the Pareto hazard `shape/(1+age+u)`.
#[pyfunction]
#[pyo3(signature = (shape, n, seed, age=0.0))]
fn sample_pareto(shape: f64, n: usize, seed: u64, age: f64) -> PyResult<Vec<f64>> {
    let clock = [HazardClock::pareto(shape, age)];
    let mut rng = Streams::new(seed).stream("python-pareto", 0);
    (0..n)
        .map(|_| {
            sample_first_event(&clock, None, &mut rng)
                .map_err(to_py)?
                .map(|e| e.delay)
                .ok_or_else(|| PyValueError::new_err("no event"))
        })
        .collect()
}

type Draw = (f64, f64, bool);

/// Maximal coupling of Exp(a) and Exp(b): `(kappa, [(x, y, coupled)])`.
#[pyfunction]
fn coupled_exponentials(a: f64, b: f64, n: usize, seed: u64) -> PyResult<(f64, Vec<Draw>)> {
    let opts = TableOptions::default();
    let f = exponential_table(a, &opts).map_err(to_py)?;
    let g = exponential_table(b, &opts).map_err(to_py)?;
    let mc = MaximalCoupling::new(&f, &g).map_err(to_py)?;
    let mut rng = Streams::new(seed).stream("python-coupling", 0);
    let draws = (0..n)
        .map(|_| {
            let d = mc.draw(&mut rng);
            (d.first, d.second, d.coupled)
        })
        .collect();
    Ok((mc.kappa(), draws))
}

#[pymodule]
fn isq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnvelope>()?;
    m.add_class::<PyFamily>()?;
    m.add_class::<PyFullState>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyMgAnalytics>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_constant, m)?)?;
    m.add_function(wrap_pyfunction!(dominate, m)?)?;
    m.add_function(wrap_pyfunction!(couple, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pareto, m)?)?;
    m.add_function(wrap_pyfunction!(coupled_exponentials, m)?)?;
    Ok(())
}
