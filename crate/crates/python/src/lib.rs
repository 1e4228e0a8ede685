//! Python bindings for the `emftd` engine.
//!
//! Simulation-heavy calls release the interpreter lock. Spreads and
//! probabilities are decimals, as in the Rust API; grades are strings such
//! as `"BBB-"`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use emftd::basket::{PricingSetup, DEFAULT_RHO};
use emftd::calibration::{CalibrationConfig, CalibrationResult};
use emftd::curve_fit::ParametricSpreadCurve;
use emftd::{
    BasketConfig, DiscountCurve, Entity, Error, ProcessParams, Quote, RatingGrade, RatingSchemes, Recovery, SpreadCurve,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_grade(s: &str) -> PyResult<RatingGrade> {
    s.parse().map_err(py_err)
}

fn parse_entity(name: &str) -> PyResult<Entity> {
    match name {
        "corporate" => Ok(Entity::Corporate),
        "country" => Ok(Entity::Country),
        other => other
            .parse::<u64>()
            .map(Entity::Custom)
            .map_err(|_| PyValueError::new_err(format!("unknown entity '{other}'"))),
    }
}

fn pricing(rate: f64, recovery: f64) -> PyResult<(DiscountCurve, Recovery)> {
    Ok((DiscountCurve::Flat(rate), Recovery::new(recovery).map_err(py_err)?))
}

#[pyclass(name = "ProcessParams", module = "pyemftd", frozen, from_py_object)]
#[derive(Clone)]
struct PyProcessParams(ProcessParams);

#[pymethods]
impl PyProcessParams {
    #[new]
    fn new(sigma: f64, lam: f64, xi: f64) -> PyResult<Self> {
        ProcessParams::new(sigma, lam, xi).map(Self).map_err(py_err)
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma()
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.0.lambda()
    }

    #[getter]
    fn xi(&self) -> f64 {
        self.0.xi()
    }

    /// Martingale drift `-sigma^2/2 + lambda xi/(1+xi)`.
    #[getter]
    fn drift(&self) -> f64 {
        self.0.drift()
    }

    fn __repr__(&self) -> String {
        format!(
            "ProcessParams(sigma={}, lam={}, xi={})",
            self.0.sigma(),
            self.0.lambda(),
            self.0.xi()
        )
    }
}

#[pyclass(name = "PathConfig", module = "pyemftd", frozen, from_py_object)]
#[derive(Clone)]
struct PyPathConfig(emftd::PathConfig);

#[pymethods]
impl PyPathConfig {
    #[new]
    #[pyo3(signature = (horizon, n_paths, seed=1, dt=1.0/250.0))]
    fn new(horizon: f64, n_paths: usize, seed: u64, dt: f64) -> PyResult<Self> {
        emftd::PathConfig::new(horizon, dt, n_paths, seed)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.0.horizon
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.0.n_paths
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.0.dt
    }
}

/// First crossing time of each barrier on each path (`inf` = never).
#[pyclass(name = "CrossingRecord", module = "pyemftd", frozen)]
struct PyCrossingRecord(emftd::CrossingRecord);

#[pymethods]
impl PyCrossingRecord {
    #[getter]
    fn barriers(&self) -> Vec<f64> {
        self.0.barriers().to_vec()
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.0.n_paths()
    }

    fn times_for(&self, level: f64) -> PyResult<Vec<f64>> {
        self.0.times_for(level).map_err(py_err)
    }

    fn crossing_fraction(&self, level: f64, t: f64) -> PyResult<f64> {
        self.0.crossing_fraction(level, t).map_err(py_err)
    }
}

#[pyclass(name = "DefaultCurve", module = "pyemftd", frozen)]
struct PyDefaultCurve(emftd::DefaultCurve);

#[pymethods]
impl PyDefaultCurve {
    #[staticmethod]
    fn estimate(times: Vec<f64>, grid: Vec<f64>) -> PyResult<Self> {
        emftd::DefaultCurve::estimate(&times, &grid).map(Self).map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.0.grid.clone()
    }

    #[getter]
    fn p(&self) -> Vec<f64> {
        self.0.p.clone()
    }

    #[getter]
    fn se(&self) -> Vec<f64> {
        self.0.se.clone()
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.0.n_paths
    }

    #[pyo3(signature = (maturity, rate=0.02, recovery=0.4))]
    fn par_spread(&self, maturity: f64, rate: f64, recovery: f64) -> PyResult<f64> {
        let (disc, rec) = pricing(rate, recovery)?;
        emftd::par_spread(&self.0, &disc, rec, maturity).map_err(py_err)
    }
}

#[pyclass(name = "BasketSpec", module = "pyemftd", frozen, from_py_object)]
#[derive(Clone)]
struct PyBasketSpec(emftd::BasketSpec);

#[pymethods]
impl PyBasketSpec {
    /// `lstar_c = inf` disables the country trigger.
    #[new]
    #[pyo3(signature = (lstar_a=1.0, lstar_c=1.0, rho=DEFAULT_RHO))]
    fn new(lstar_a: f64, lstar_c: f64, rho: f64) -> PyResult<Self> {
        emftd::BasketSpec::new(lstar_a, lstar_c, rho).map(Self).map_err(py_err)
    }

    #[getter]
    fn lstar_a(&self) -> f64 {
        self.0.lstar_a
    }

    #[getter]
    fn lstar_c(&self) -> f64 {
        self.0.lstar_c
    }

    #[getter]
    fn rho(&self) -> f64 {
        self.0.rho
    }
}

fn spread_dict<'py>(py: Python<'py>, c: &SpreadCurve) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("tenors", c.tenors.clone())?;
    d.set_item("spreads", c.spreads.clone())?;
    d.set_item("stderr", c.stderr.clone())?;
    Ok(d)
}

fn calibration_dict<'py>(py: Python<'py>, r: &CalibrationResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("label", r.label.clone())?;
    d.set_item("sigma", r.sigma)?;
    d.set_item("xi", r.xi)?;
    d.set_item("lam", r.lambda)?;
    d.set_item("objective", r.objective)?;
    d.set_item("evaluations", r.evaluations)?;
    d.set_item("converged", r.converged)?;
    Ok(d)
}

#[pyfunction]
fn martingale_drift(sigma: f64, lam: f64, xi: f64) -> PyResult<f64> {
    emftd::martingale_drift(sigma, lam, xi).map_err(py_err)
}

/// `P(mu s + sigma W_s < -level for some s <= t)`.
#[pyfunction]
fn diffusion_first_passage_cdf(sigma: f64, mu: f64, level: f64, t: f64) -> PyResult<f64> {
    emftd::diffusion_first_passage_cdf(sigma, mu, level, t).map_err(py_err)
}

#[pyfunction]
fn lstar_c_for_grade(grade: &str) -> PyResult<f64> {
    Ok(emftd::lstar_c_for_grade(parse_grade(grade)?, &RatingSchemes::default()))
}

#[pyfunction]
fn lambda_for_grade(grade: &str) -> PyResult<f64> {
    Ok(RatingSchemes::default().lambda(parse_grade(grade)?))
}

#[pyfunction]
#[pyo3(signature = (params, barriers, cfg, entity="corporate"))]
fn simulate_crossings(
    py: Python<'_>,
    params: &PyProcessParams,
    barriers: Vec<f64>,
    cfg: &PyPathConfig,
    entity: &str,
) -> PyResult<PyCrossingRecord> {
    let e = parse_entity(entity)?;
    let (p, c) = (params.0, cfg.0);
    py.detach(|| emftd::simulate_crossings(&p, &barriers, &c, e))
        .map(PyCrossingRecord)
        .map_err(py_err)
}

/// Jointly simulated corporate and country records with Brownian
/// correlation `rho`; returns `(corporate, country)`.
#[pyfunction]
fn simulate_pair_crossings(
    py: Python<'_>,
    corporate: &PyProcessParams,
    country: &PyProcessParams,
    rho: f64,
    corporate_barriers: Vec<f64>,
    country_barriers: Vec<f64>,
    cfg: &PyPathConfig,
) -> PyResult<(PyCrossingRecord, PyCrossingRecord)> {
    let (a, c, conf) = (corporate.0, country.0, cfg.0);
    let pair = py
        .detach(|| emftd::simulate_pair_crossings(&a, &c, rho, &corporate_barriers, &country_barriers, &conf))
        .map_err(py_err)?;
    Ok((PyCrossingRecord(pair.corporate), PyCrossingRecord(pair.country)))
}

#[pyfunction]
fn estimate_default_curve(record: &PyCrossingRecord, level: f64, grid: Vec<f64>) -> PyResult<PyDefaultCurve> {
    emftd::estimate_default_curve(&record.0, level, &grid)
        .map(PyDefaultCurve)
        .map_err(py_err)
}

/// Spreads and standard errors from a sample of default times.
#[pyfunction]
#[pyo3(signature = (default_times, tenors, rate=0.02, recovery=0.4))]
fn spread_curve<'py>(
    py: Python<'py>,
    default_times: Vec<f64>,
    tenors: Vec<f64>,
    rate: f64,
    recovery: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let (disc, rec) = pricing(rate, recovery)?;
    let c = emftd::spread_curve(&default_times, &disc, rec, &tenors).map_err(py_err)?;
    spread_dict(py, &c)
}

#[pyfunction]
fn basket_default_samples(
    corporate: &PyCrossingRecord,
    country: &PyCrossingRecord,
    spec: &PyBasketSpec,
) -> PyResult<Vec<f64>> {
    emftd::basket_default_samples(&corporate.0, &country.0, &spec.0).map_err(py_err)
}

/// Country, standalone, first-to-default and EM curves per rating.
///
/// `sectors` maps grade strings to `ProcessParams`.
#[pyfunction]
#[pyo3(signature = (
    country, sectors, tenors, n_paths=100_000, seed=1, dt=1.0/250.0, rho=DEFAULT_RHO,
    rate=0.02, recovery=0.4, extension1=false
))]
#[allow(clippy::too_many_arguments)]
fn em_corporate_curve<'py>(
    py: Python<'py>,
    country: &PyProcessParams,
    sectors: BTreeMap<String, PyProcessParams>,
    tenors: Vec<f64>,
    n_paths: usize,
    seed: u64,
    dt: f64,
    rho: f64,
    rate: f64,
    recovery: f64,
    extension1: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut map = BTreeMap::new();
    for (g, p) in sectors {
        map.insert(parse_grade(&g)?, p.0);
    }
    let (disc, rec) = pricing(rate, recovery)?;
    let cfg = emftd::PathConfig::new(dt, dt, n_paths, seed).map_err(py_err)?;
    let basket = BasketConfig {
        rho,
        extension1,
        ..BasketConfig::default()
    };
    let c = country.0;
    let curves = py
        .detach(|| {
            emftd::em_corporate_curve(
                &c,
                &map,
                &[],
                &RatingSchemes::default(),
                &basket,
                PricingSetup {
                    cfg: &cfg,
                    disc: &disc,
                    rec,
                    tenors: &tenors,
                },
            )
        })
        .map_err(py_err)?;
    let out = PyDict::new(py);
    out.set_item("country", spread_dict(py, &curves.country)?)?;
    let grades = PyDict::new(py);
    for g in &curves.grades {
        let d = PyDict::new(py);
        d.set_item("lstar_a", g.spec.lstar_a)?;
        d.set_item("lstar_c", g.spec.lstar_c)?;
        d.set_item("standalone", spread_dict(py, &g.standalone)?)?;
        d.set_item("ftd", spread_dict(py, &g.ftd)?)?;
        d.set_item("em", spread_dict(py, &g.em)?)?;
        grades.set_item(g.grade.to_string(), d)?;
    }
    out.set_item("grades", grades)?;
    Ok(out)
}

/// Fits the parametric sector curve to `(tenor, spread, grade)` quotes.
#[pyfunction]
fn fit_sector<'py>(py: Python<'py>, quotes: Vec<(f64, f64, String)>) -> PyResult<Bound<'py, PyDict>> {
    let q = quotes
        .iter()
        .map(|(t, s, g)| Quote::new(*t, *s, parse_grade(g)?).map_err(py_err))
        .collect::<PyResult<Vec<_>>>()?;
    let fit = emftd::fit_sector(&q).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("theta", fit.curve.theta)?;
    let params = PyDict::new(py);
    for (b, (a, bb)) in &fit.curve.params {
        params.set_item(RatingGrade::broad_grade(*b).to_string(), (*a, *bb))?;
    }
    d.set_item("params", params)?;
    d.set_item("residuals", fit.residuals.clone())?;
    d.set_item("rms_relative_error", fit.rms_relative_error)?;
    Ok(d)
}

/// Spread of `grade` at `t` from a fitted curve given as
/// `(theta, {broad grade: (a, b)})`.
#[pyfunction]
fn grade_spread(theta: f64, params: BTreeMap<String, (f64, f64)>, grade: &str, t: f64) -> PyResult<f64> {
    let mut map = BTreeMap::new();
    for (g, ab) in params {
        map.insert(parse_grade(&g)?.broad(), ab);
    }
    let curve = ParametricSpreadCurve::new(theta, map).map_err(py_err)?;
    emftd::interpolate_grade_spread(&curve, parse_grade(grade)?, t).map_err(py_err)
}

/// Calibrates `(sigma, xi)` of a country to `(tenor, spread)` quotes.
#[pyfunction]
#[pyo3(signature = (label, quotes, grade, lam=None, n_paths=100_000, seed=1))]
fn calibrate_country<'py>(
    py: Python<'py>,
    label: &str,
    quotes: Vec<(f64, f64)>,
    grade: &str,
    lam: Option<f64>,
    n_paths: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = parse_grade(grade)?;
    let cfg = CalibrationConfig {
        n_paths,
        seed,
        ..CalibrationConfig::default()
    };
    let r = py
        .detach(|| emftd::calibrate_country(label, &quotes, g, &RatingSchemes::default(), lam, &cfg))
        .map_err(py_err)?;
    calibration_dict(py, &r)
}

#[pymodule]
pub fn pyemftd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProcessParams>()?;
    m.add_class::<PyPathConfig>()?;
    m.add_class::<PyCrossingRecord>()?;
    m.add_class::<PyDefaultCurve>()?;
    m.add_class::<PyBasketSpec>()?;
    m.add_function(wrap_pyfunction!(martingale_drift, m)?)?;
    m.add_function(wrap_pyfunction!(diffusion_first_passage_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(lstar_c_for_grade, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_for_grade, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_crossings, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_pair_crossings, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_default_curve, m)?)?;
    m.add_function(wrap_pyfunction!(spread_curve, m)?)?;
    m.add_function(wrap_pyfunction!(basket_default_samples, m)?)?;
    m.add_function(wrap_pyfunction!(em_corporate_curve, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sector, m)?)?;
    m.add_function(wrap_pyfunction!(grade_spread, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_country, m)?)?;
    Ok(())
}
