//! Python bindings: wheel geometry, four-bar kinematics, oscillator traces
//! and scenario runs.

use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use legwheel::geometry::{design_table as table, design_table_csv, wheel_geometry, ArcWheelSpec};
use legwheel::harness::{self, Scenario as CoreScenario};
use legwheel::kinematics::{
    phase_offset_profile, planetary_torques, quasi_static_torques, wheel_fk, wheel_ik,
    FourBarConfig, HubState, TipLoad, Vec2,
};
use legwheel::oscillators::OscillatorModel;
use legwheel::sim::TrialMetrics;

create_exception!(pylegwheel, LegwheelError, PyException);
create_exception!(pylegwheel, ValidationError, LegwheelError);
create_exception!(pylegwheel, DivergenceError, LegwheelError);

fn py_err(e: legwheel::Error) -> PyErr {
    if e.is_divergence() {
        DivergenceError::new_err(e.to_string())
    } else if e.is_validation() {
        ValidationError::new_err(e.to_string())
    } else {
        LegwheelError::new_err(e.to_string())
    }
}

type Point = (f64, f64);

fn pt(v: Vec2) -> Point {
    (v.x, v.y)
}

/// `(arc_length, step_length, h_min, h_max)` of an arc wheel.
#[pyfunction]
fn geometry(n_arcs: u32, radius: f64) -> PyResult<(f64, f64, f64, f64)> {
    let m = wheel_geometry(ArcWheelSpec::new(n_arcs, radius).map_err(py_err)?);
    Ok((m.arc_length, m.step_length, m.h_min, m.h_max))
}

/// Design table as CSV text.
#[pyfunction]
#[pyo3(signature = (n_min, n_max, radius, decimals = 2))]
fn design_table(n_min: u32, n_max: u32, radius: f64, decimals: u32) -> PyResult<String> {
    let rows = table(n_min..=n_max, radius).map_err(py_err)?;
    Ok(design_table_csv(&rows, decimals))
}

/// Oscillator network trace as CSV text.
#[pyfunction]
#[pyo3(signature = (model, duration = 10.0, dt = 0.01))]
fn trace(model: &str, duration: f64, dt: f64) -> PyResult<String> {
    let model = match model {
        "kuramoto" => OscillatorModel::Kuramoto,
        "hopf" => OscillatorModel::Hopf,
        "vdp" => OscillatorModel::Vdp,
        _ => return Err(ValidationError::new_err(format!("unknown model '{model}'"))),
    };
    harness::trace_csv(model, duration, dt).map_err(py_err)
}

/// Four-bar transformable wheel.
#[pyclass(name = "FourBar", module = "pylegwheel")]
struct PyFourBar {
    cfg: FourBarConfig,
}

#[pymethods]
impl PyFourBar {
    /// The prototype wheel.
    #[new]
    fn new() -> Self {
        Self {
            cfg: FourBarConfig::prototype(),
        }
    }

    #[getter]
    fn n_arcs(&self) -> u32 {
        self.cfg.n_arcs
    }

    #[getter]
    fn reach(&self) -> Point {
        (self.cfg.reach_min, self.cfg.reach_max)
    }

    /// Hub angles `(phi_outer, phi_inner)` putting the tip at `(x, y)`.
    fn ik(&self, x: f64, y: f64) -> PyResult<Point> {
        let h = wheel_ik(Vec2::new(x, y), &self.cfg).map_err(py_err)?;
        Ok((h.phi_outer, h.phi_inner))
    }

    /// Joint positions `(a, b, c, p)`.
    fn fk(&self, phi_outer: f64, phi_inner: f64) -> PyResult<(Point, Point, Point, Point)> {
        let l = wheel_fk(HubState::new(phi_outer, phi_inner), &self.cfg).map_err(py_err)?;
        Ok((pt(l.a), pt(l.b), pt(l.c), pt(l.p)))
    }

    /// `(x, offset, phi_outer, phi_inner)` rows along a level tip path.
    #[pyo3(signature = (height, x_min, x_max, samples = 101))]
    fn profile(
        &self,
        height: f64,
        x_min: f64,
        x_max: f64,
        samples: usize,
    ) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let pts = phase_offset_profile(height, (x_min, x_max), samples, &self.cfg).map_err(py_err)?;
        Ok(pts
            .into_iter()
            .map(|p| (p.x, p.offset, p.phi_outer, p.phi_inner))
            .collect())
    }

    /// `(tau_inner, tau_outer, link_tension)` holding a tip force.
    fn torques(&self, fx: f64, fy: f64, phi_outer: f64, phi_inner: f64) -> PyResult<(f64, f64, f64)> {
        let t = quasi_static_torques(
            HubState::new(phi_outer, phi_inner),
            TipLoad {
                force: Vec2::new(fx, fy),
            },
            &self.cfg,
        )
        .map_err(py_err)?;
        Ok((t.inner, t.outer, t.link_tension))
    }

    /// Hub torques mapped through the planetary gear.
    fn planetary(&self, inner: f64, outer: f64) -> PyResult<Point> {
        let gear = self
            .cfg
            .gear
            .ok_or_else(|| LegwheelError::new_err("wheel has no planetary gear"))?;
        Ok(planetary_torques(inner, outer, &gear))
    }
}

fn metrics_dict<'py>(py: Python<'py>, m: &TrialMetrics) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("height_mean", m.height_mean)?;
    d.set_item("height_sd", m.height_sd)?;
    d.set_item("mean_speed", m.mean_speed)?;
    d.set_item("final_x", m.final_x)?;
    d.set_item("final_y", m.final_y)?;
    d.set_item("final_offset_norm", m.final_offset_norm)?;
    d.set_item("turn_radius", m.turn_radius)?;
    Ok(d)
}

/// Experiment scenario, as read from TOML.
#[pyclass(name = "Scenario", module = "pylegwheel")]
struct PyScenario {
    inner: CoreScenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = CoreScenario::from_toml(text).map_err(py_err)?;
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreScenario::load(Path::new(path)).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(py_err)
    }

    #[getter]
    fn oscillator(&self) -> &'static str {
        self.inner.oscillator.name()
    }

    #[getter]
    fn trials(&self) -> usize {
        self.inner.trials
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    /// Trial `k`: `(metrics, log_csv)`. The GIL is released while it runs.
    #[pyo3(signature = (k = 0, seed = None))]
    fn run_trial<'py>(
        &self,
        py: Python<'py>,
        k: usize,
        seed: Option<u64>,
    ) -> PyResult<(Bound<'py, pyo3::types::PyDict>, String)> {
        let master = seed.unwrap_or(self.inner.seed);
        let s = &self.inner;
        let (r, log) = py
            .detach(|| harness::run_single(s, master, k))
            .map_err(py_err)?;
        Ok((metrics_dict(py, &r.metrics)?, log.to_csv()))
    }

    /// All trials: `(trials_csv, aggregate_csv)`.
    fn run_suite(&self, py: Python<'_>) -> PyResult<(String, String)> {
        let s = &self.inner;
        let r = py.detach(|| harness::run_suite(s)).map_err(py_err)?;
        Ok((harness::trials_csv(&r.trials), harness::aggregate_csv(&r.aggregate)))
    }

    /// The scenario under every oscillator, as CSV text.
    fn compare(&self, py: Python<'_>) -> PyResult<String> {
        let s = &self.inner;
        py.detach(|| harness::compare_oscillators(s))
            .map(|c| c.to_csv())
            .map_err(py_err)
    }
}

#[pymodule]
fn pylegwheel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(geometry, m)?)?;
    m.add_function(wrap_pyfunction!(design_table, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    m.add_class::<PyFourBar>()?;
    m.add_class::<PyScenario>()?;
    let py = m.py();
    m.add("LegwheelError", py.get_type::<LegwheelError>())?;
    m.add("ValidationError", py.get_type::<ValidationError>())?;
    m.add("DivergenceError", py.get_type::<DivergenceError>())?;
    Ok(())
}
