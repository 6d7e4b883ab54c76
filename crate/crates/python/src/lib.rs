use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use curveflow::gh::{ConvergenceOptions, Lattice};
use curveflow::reaction::{PinchingMode, PinchingParams};
use curveflow::taming::{CutoffProfile, ExpComparison, TamingOptions};
use curveflow::{Error, FlowConfig, MonitorPair, Profile, RadialGrid};

create_exception!(curveflow_py, CurveflowError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Parse(_) => PyValueError::new_err(e.to_string()),
        _ => CurveflowError::new_err(e.to_string()),
    }
}

/// Reports cross into Python as plain dicts and lists.
fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| CurveflowError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(frozen, module = "curveflow_py")]
struct WarpedMetric {
    inner: curveflow::WarpedMetric,
}

#[pymethods]
impl WarpedMetric {
    /// `sphere:<r0>`, `euclidean`, `cone:<c>[:<s_moll>]`, `wild` or `custom:<file>`.
    #[new]
    #[pyo3(signature = (profile, nodes = 400, s_max = 8.0))]
    fn new(profile: &str, nodes: usize, s_max: f64) -> PyResult<Self> {
        let p: Profile = profile.parse().map_err(err)?;
        Ok(WarpedMetric {
            inner: p.build(nodes, s_max).map_err(err)?,
        })
    }

    /// Sampled on a grid graded from `h_min` at the tip to `h_max`.
    #[staticmethod]
    fn graded(profile: &str, h_min: f64, h_max: f64, s_max: f64) -> PyResult<Self> {
        let p: Profile = profile.parse().map_err(err)?;
        let grid = RadialGrid::graded(h_min, h_max, s_max).map_err(err)?;
        Ok(WarpedMetric {
            inner: p.build_on(grid).map_err(err)?,
        })
    }

    #[getter]
    fn s(&self) -> Vec<f64> {
        self.inner.s().to_vec()
    }

    #[getter]
    fn w(&self) -> Vec<f64> {
        self.inner.w().to_vec()
    }

    #[getter]
    fn s_max(&self) -> f64 {
        self.inner.s_max()
    }

    fn __len__(&self) -> usize {
        self.inner.s().len()
    }

    fn __repr__(&self) -> String {
        format!("WarpedMetric(nodes={}, s_max={})", self.inner.s().len(), self.inner.s_max())
    }

    /// Dict of `s, k_rad, k_sph, ric_rad, ric_sph, scalar_r, riem_sup`.
    fn curvature<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &curveflow::curvature(&self.inner).map_err(err)?)
    }

    fn ball_volume(&self, r: f64) -> PyResult<f64> {
        curveflow::ball_volume(&self.inner, r).map_err(err)
    }

    fn distance(&self, s1: f64, psi: f64, s2: f64) -> PyResult<f64> {
        curveflow::geodesic::surface_distance(&self.inner, s1, psi, s2).map_err(err)
    }

    fn bishop_gromov<'py>(&self, py: Python<'py>, kappa: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &curveflow::bishop_gromov_check(&self.inner, kappa).map_err(err)?)
    }

    #[pyo3(signature = (index, depth = 1))]
    fn tame(&self, index: f64, depth: usize) -> PyResult<Self> {
        let p = CutoffProfile::new(ExpComparison::new(depth).map_err(err)?, index).map_err(err)?;
        Ok(WarpedMetric {
            inner: curveflow::taming::tame(&self.inner, &p).map_err(err)?,
        })
    }

    #[pyo3(signature = (indices, k = 1.0, depth = 1))]
    fn verify_taming<'py>(&self, py: Python<'py>, indices: Vec<f64>, k: f64, depth: usize) -> PyResult<Bound<'py, PyAny>> {
        let h = ExpComparison::new(depth).map_err(err)?;
        let r = py
            .detach(|| curveflow::taming::verify_taming(&self.inner, h, &indices, k, &TamingOptions::default()))
            .map_err(err)?;
        to_py(py, &r)
    }

    /// Integrate the flow. Pairs are `(x1, psi, x2)` in initial arclength.
    #[pyo3(signature = (t_end, snapshots = None, pairs = None, tracked = None))]
    fn flow(
        &self,
        py: Python<'_>,
        t_end: f64,
        snapshots: Option<Vec<f64>>,
        pairs: Option<Vec<(f64, f64, f64)>>,
        tracked: Option<Vec<f64>>,
    ) -> PyResult<FlowTrace> {
        let mut cfg = FlowConfig::new(t_end);
        cfg.snapshot_times = snapshots.unwrap_or_default();
        cfg.monitor_pairs = pairs
            .unwrap_or_default()
            .into_iter()
            .map(|(x1, psi, x2)| MonitorPair { x1, psi, x2 })
            .collect();
        cfg.tracked_points = tracked.unwrap_or_default();
        let trace = py.detach(|| curveflow::run(&self.inner, &cfg)).map_err(err)?;
        Ok(FlowTrace { inner: trace })
    }
}

#[pyclass(frozen, module = "curveflow_py")]
struct FlowTrace {
    inner: curveflow::FlowTrace,
}

#[pymethods]
impl FlowTrace {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.snapshots.iter().map(|s| s.state.t).collect()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps
    }

    fn __len__(&self) -> usize {
        self.inner.snapshots.len()
    }

    fn metric(&self, k: usize) -> PyResult<WarpedMetric> {
        let snap = self
            .inner
            .snapshots
            .get(k)
            .ok_or_else(|| PyValueError::new_err(format!("snapshot {k} out of range")))?;
        Ok(WarpedMetric {
            inner: snap.metric.clone(),
        })
    }

    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let d: Vec<_> = self.inner.snapshots.iter().map(|s| &s.diagnostics).collect();
        to_py(py, &d)
    }

    /// `sup t |Riem|` over recorded steps in `[t0, t1]`.
    fn scaled_curvature_sup(&self, t0: f64, t1: f64) -> f64 {
        self.inner.scaled_curvature_sup(t0, t1)
    }

    fn monitor<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let t = self.inner.config.t_end;
        to_py(py, &curveflow::monitor_flow(&self.inner, (0.0, t)))
    }

    fn distance_monitor<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &curveflow::distance_monitor(&self.inner))
    }

    #[pyo3(signature = (v0 = None))]
    fn volume_continuity<'py>(&self, py: Python<'py>, v0: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &curveflow::volume_continuity(&self.inner, v0).map_err(err)?)
    }

    #[pyo3(signature = (eps0 = 1e-3, k = 100.0))]
    fn pinching<'py>(&self, py: Python<'py>, eps0: f64, k: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &curveflow::lemma52_monitor(&self.inner, eps0, k).map_err(err)?)
    }
}

#[pyfunction]
#[pyo3(signature = (mode, eps0, samples, seed = 0))]
fn pinching_sweep<'py>(py: Python<'py>, mode: &str, eps0: f64, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let mode = match mode {
        "ricci" => PinchingMode::Ricci,
        "sectional" => PinchingMode::Sectional,
        _ => return Err(PyValueError::new_err(format!("mode '{mode}', expected 'ricci' or 'sectional'"))),
    };
    let params = PinchingParams::new(eps0).map_err(err)?;
    let r = py.detach(|| curveflow::pinching_sweep(&params, mode, samples, seed)).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (samples, eps0, k = 100.0, seed = 0))]
fn verify_n11<'py>(py: Python<'py>, samples: usize, eps0: f64, k: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| curveflow::verify_n11(samples, eps0, k, seed));
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (k_max, l_max, samples, seed = 0))]
fn jacobi_sweep<'py>(py: Python<'py>, k_max: f64, l_max: f64, samples: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| curveflow::jacobi_sweep(k_max, l_max, samples, seed));
    to_py(py, &r)
}

#[pyclass(frozen, module = "curveflow_py")]
struct FiniteMetricSpace {
    inner: curveflow::FiniteMetricSpace,
}

#[pymethods]
impl FiniteMetricSpace {
    #[new]
    #[pyo3(signature = (dist, labels = None, base = 0))]
    fn new(dist: Vec<Vec<f64>>, labels: Option<Vec<String>>, base: usize) -> PyResult<Self> {
        let labels = labels.unwrap_or_else(|| (0..dist.len()).map(|i| i.to_string()).collect());
        Ok(FiniteMetricSpace {
            inner: curveflow::FiniteMetricSpace::new(labels, dist, base).map_err(err)?,
        })
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.inner.matrix().to_vec()
    }

    fn diam(&self) -> f64 {
        self.inner.diam()
    }

    fn scaled(&self, lam: f64) -> PyResult<Self> {
        Ok(FiniteMetricSpace {
            inner: self.inner.scaled(lam).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pyfunction]
fn gh_exact(x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> PyResult<f64> {
    curveflow::gh_exact_small(&x.inner, &y.inner).map_err(err)
}

/// `(lower, upper)` bounds on the GH distance.
#[pyfunction]
fn gh_bounds(x: &FiniteMetricSpace, y: &FiniteMetricSpace) -> (f64, f64) {
    (curveflow::gh_lower_bound(&x.inner, &y.inner), curveflow::gh_upper_bound(&x.inner, &y.inner))
}

/// Lattice sample of a warped metric about its tip.
#[pyfunction]
fn sample_warped(py: Python<'_>, m: &WarpedMetric, radial: usize, angular: usize, r_max: f64) -> PyResult<FiniteMetricSpace> {
    let lat = Lattice::new(radial, angular, r_max).map_err(err)?;
    let inner = py.detach(|| curveflow::sample_warped(&m.inner, &lat)).map_err(err)?;
    Ok(FiniteMetricSpace { inner })
}

/// Distance in the cone over the round sphere (link points in R³) or over
/// RP³ (`rp3=True`, link points in R⁴).
#[pyfunction]
#[pyo3(signature = (c, r, x, s, y, rp3 = false))]
fn cone_distance(c: f64, r: f64, x: Vec<f64>, s: f64, y: Vec<f64>, rp3: bool) -> PyResult<f64> {
    let link = if rp3 { curveflow::Link::Rp3 } else { curveflow::Link::Sphere2 };
    let spec = curveflow::ConeSpec::new(c, link).map_err(err)?;
    spec.distance(r, &x, s, &y).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (c = 0.25, scales = vec![1.0, 4.0, 16.0, 64.0], r_max = 2.0, radial = 12, angular = 16))]
fn cone_convergence<'py>(
    py: Python<'py>,
    c: f64,
    scales: Vec<f64>,
    r_max: f64,
    radial: usize,
    angular: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let opts = ConvergenceOptions {
        c,
        scales,
        lattice: Lattice::new(radial, angular, r_max).map_err(err)?,
        ..Default::default()
    };
    let r = py.detach(|| curveflow::cone_convergence_experiment(&opts)).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn selftest<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(curveflow::selftest);
    to_py(py, &r)
}

#[pymodule]
fn curveflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CurveflowError", m.py().get_type::<CurveflowError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<WarpedMetric>()?;
    m.add_class::<FlowTrace>()?;
    m.add_class::<FiniteMetricSpace>()?;
    m.add_function(wrap_pyfunction!(pinching_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_n11, m)?)?;
    m.add_function(wrap_pyfunction!(jacobi_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(gh_exact, m)?)?;
    m.add_function(wrap_pyfunction!(gh_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(sample_warped, m)?)?;
    m.add_function(wrap_pyfunction!(cone_distance, m)?)?;
    m.add_function(wrap_pyfunction!(cone_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
